// Client-side construction and signing of canonical ledger transactions.
// The byte layout must match the server exactly; the cross-language vectors
// in tests/codec.spec.ts pin it.

import { bstr, concat, fromHex, toHex, u16, u64, utf8 } from "./codec.js";
import { sha256, sign } from "./crypto.js";

export const ACCOUNT_PREFIX = "GA";

export function parseAccountId(display: string): Uint8Array {
  if (!display.startsWith(ACCOUNT_PREFIX) || display.length !== 66) {
    throw new Error(`bad account id: ${display}`);
  }
  return fromHex(display.slice(2));
}

export function displayAccountId(value: Uint8Array): string {
  if (value.length !== 32) throw new Error("account id must be 32 bytes");
  return ACCOUNT_PREFIX + toHex(value);
}

export interface PaymentSpec {
  source: Uint8Array; // 32-byte public key
  sequence: number;
  destination: Uint8Array;
  assetCode: string;
  assetIssuer: Uint8Array;
  amount: number;
  memoHash?: Uint8Array; // 32 bytes when present
}

function encodeAsset(code: string, issuer: Uint8Array): Uint8Array {
  return concat(bstr(utf8(code)), issuer);
}

export function encodePaymentTx(spec: PaymentSpec): Uint8Array {
  const memo = spec.memoHash
    ? concat(new Uint8Array([1]), spec.memoHash)
    : new Uint8Array([0]);
  if (spec.memoHash && spec.memoHash.length !== 32) {
    throw new Error("hash memo must be 32 bytes");
  }
  const op = concat(
    new Uint8Array([2]),
    spec.destination,
    encodeAsset(spec.assetCode, spec.assetIssuer),
    u64(spec.amount),
  );
  return concat(spec.source, u64(spec.sequence), memo, u16(1), op);
}

export async function txHash(
  txBytes: Uint8Array,
  networkId: string,
): Promise<Uint8Array> {
  return sha256(concat(bstr(utf8(networkId)), txBytes));
}

export async function signTx(
  txBytes: Uint8Array,
  networkId: string,
  privateKeyPkcs8: Uint8Array,
): Promise<Uint8Array> {
  const signature = await sign(privateKeyPkcs8, await txHash(txBytes, networkId));
  return concat(bstr(txBytes), bstr(signature));
}

export function paddedMemo(userHash: Uint8Array): Uint8Array {
  if (userHash.length !== 16) throw new Error("user hash must be 16 bytes");
  return concat(userHash, new Uint8Array(16));
}
