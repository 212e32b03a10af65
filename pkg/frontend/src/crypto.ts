// WebCrypto-backed primitives: SHA-256, Ed25519 account keys, and opening
// of the server's hybrid envelopes (RSA-OAEP/SHA-256 key wrap, AES-256-GCM
// payload). Signing keys live in browser storage and never leave it.

import { Reader, concat, fromHex, toHex } from "./codec.js";

const subtle = globalThis.crypto.subtle;

export async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await subtle.digest("SHA-256", data as BufferSource));
}

export interface SigningKeys {
  publicKey: Uint8Array; // 32 raw bytes; doubles as the ledger account id
  privateKeyPkcs8: Uint8Array;
}

export async function generateSigningKeys(): Promise<SigningKeys> {
  const pair = (await subtle.generateKey({ name: "Ed25519" }, true, [
    "sign",
    "verify",
  ])) as CryptoKeyPair;
  return {
    publicKey: new Uint8Array(await subtle.exportKey("raw", pair.publicKey)),
    privateKeyPkcs8: new Uint8Array(
      await subtle.exportKey("pkcs8", pair.privateKey),
    ),
  };
}

// Fixed PKCS8 prefix for an Ed25519 private key carrying a raw 32-byte seed.
const ED25519_PKCS8_PREFIX = fromHex("302e020100300506032b657004220420");

export function seedToPkcs8(seed: Uint8Array): Uint8Array {
  if (seed.length !== 32) throw new Error("Ed25519 seed must be 32 bytes");
  return concat(ED25519_PKCS8_PREFIX, seed);
}

export async function sign(
  privateKeyPkcs8: Uint8Array,
  message: Uint8Array,
): Promise<Uint8Array> {
  const key = await subtle.importKey(
    "pkcs8",
    privateKeyPkcs8 as BufferSource,
    { name: "Ed25519" },
    false,
    ["sign"],
  );
  return new Uint8Array(await subtle.sign("Ed25519", key, message as BufferSource));
}

export interface SealedEnvelope {
  wrappedKey: Uint8Array;
  nonce: Uint8Array;
  ciphertext: Uint8Array;
  tag: Uint8Array;
  recipientHint: Uint8Array;
}

export function parseEnvelope(data: Uint8Array): SealedEnvelope {
  const r = new Reader(data);
  const version = r.take(1)[0];
  if (version !== 1) throw new Error(`unsupported envelope version ${version}`);
  const env = {
    wrappedKey: r.bstr(),
    nonce: r.bstr(),
    ciphertext: r.bstr(),
    tag: r.bstr(),
    recipientHint: r.bstr(),
  };
  r.expectEnd();
  return env;
}

export async function openEnvelope(
  envelopeHex: string,
  privateKeyPkcs8Der: Uint8Array,
): Promise<Uint8Array> {
  const env = parseEnvelope(fromHex(envelopeHex));
  const rsaKey = await subtle.importKey(
    "pkcs8",
    privateKeyPkcs8Der as BufferSource,
    { name: "RSA-OAEP", hash: "SHA-256" },
    false,
    ["decrypt"],
  );
  const sessionKey = new Uint8Array(
    await subtle.decrypt({ name: "RSA-OAEP" }, rsaKey, env.wrappedKey as BufferSource),
  );
  const aesKey = await subtle.importKey(
    "raw",
    sessionKey as BufferSource,
    { name: "AES-GCM" },
    false,
    ["decrypt"],
  );
  const sealed = concat(env.ciphertext, env.tag);
  const plain = await subtle.decrypt(
    { name: "AES-GCM", iv: env.nonce as BufferSource, tagLength: 128 },
    aesKey,
    sealed as BufferSource,
  );
  return new Uint8Array(plain);
}

export { toHex, fromHex };
