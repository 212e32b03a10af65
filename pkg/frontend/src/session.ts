// The user's browser session: keys in local storage, registration, token
// purchase, and the four-step certificate send pipeline. The signing
// secret and decrypted certificate content never travel to the controller;
// the only bytes it sees are documented API fields.

import { ApiClient } from "./api.js";
import { fromHex, toHex } from "./codec.js";
import { generateSigningKeys } from "./crypto.js";
import {
  displayAccountId,
  encodePaymentTx,
  paddedMemo,
  parseAccountId,
  signTx,
  txHash,
} from "./ledgertx.js";

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
}

export type SendStep =
  | "hash-issued"
  | "payment-applied"
  | "confirmed"
  | "qr-shown";

export const SEND_STEPS: SendStep[] = [
  "hash-issued",
  "payment-applied",
  "confirmed",
  "qr-shown",
];

interface StoredSession {
  publicKey: string;
  privateKeyPkcs8: string;
  userId: string | null;
  authToken: string | null;
  transfers: Record<string, { qrText: string; testId: string; companyId: string }>;
}

const STORE_KEY = "certchain.user-session.v1";

export class UserSession {
  private state: StoredSession | null = null;

  constructor(
    public api: ApiClient,
    private store: KeyValueStore,
  ) {}

  private load(): StoredSession | null {
    if (this.state) return this.state;
    const raw = this.store.get(STORE_KEY);
    this.state = raw ? (JSON.parse(raw) as StoredSession) : null;
    if (this.state?.authToken) this.api.token = this.state.authToken;
    return this.state;
  }

  private save(): void {
    if (this.state) this.store.set(STORE_KEY, JSON.stringify(this.state));
  }

  async ensureKeys(): Promise<StoredSession> {
    let state = this.load();
    if (!state) {
      const keys = await generateSigningKeys();
      state = {
        publicKey: toHex(keys.publicKey),
        privateKeyPkcs8: toHex(keys.privateKeyPkcs8),
        userId: null,
        authToken: null,
        transfers: {},
      };
      this.state = state;
      this.save();
    }
    return state;
  }

  get userId(): string | null {
    return this.load()?.userId ?? null;
  }

  get accountDisplay(): string | null {
    const state = this.load();
    return state ? displayAccountId(fromHex(state.publicKey)) : null;
  }

  cachedTransfers(): Array<{ numericId: string; qrText: string }> {
    const state = this.load();
    if (!state) return [];
    return Object.entries(state.transfers).map(([numericId, t]) => ({
      numericId,
      qrText: t.qrText,
    }));
  }

  async register(name: string, nationalId: string): Promise<string> {
    const state = await this.ensureKeys();
    if (state.userId) throw new Error(`already registered as ${state.userId}`);
    const out = await this.api.registerUser(name, nationalId, state.publicKey);
    state.userId = out.user_id;
    state.authToken = out.auth_token;
    this.api.token = out.auth_token;
    this.save();
    return out.user_id;
  }

  private registered(): StoredSession {
    const state = this.load();
    if (!state?.userId) throw new Error("register first");
    return state;
  }

  async balance(): Promise<number> {
    const state = this.registered();
    const account = await this.api.ledgerAccount(
      displayAccountId(fromHex(state.publicKey)),
    );
    return account.balances.find((b) => b.asset_code === "KYC")?.balance ?? 0;
  }

  async buy(n: number, paymentProof: string) {
    const state = this.registered();
    const out = await this.api.purchase(state.userId!, n, paymentProof);
    return { txHash: out.tx_hash, balance: await this.balance() };
  }

  async send(
    testId: string,
    companyId: string,
    onStep: (step: SendStep) => void = () => {},
  ): Promise<{ numericId: number; qrText: string }> {
    const state = this.registered();
    const info = await this.api.ledgerInfo();

    const initiated = await this.api.initiateTransfer(
      state.userId!,
      testId,
      companyId,
    );
    onStep("hash-issued");

    const source = fromHex(state.publicKey);
    const account = await this.api.ledgerAccount(displayAccountId(source));
    const txBytes = encodePaymentTx({
      source,
      sequence: account.sequence + 1,
      destination: parseAccountId(initiated.destination_account),
      assetCode: info.asset_code,
      assetIssuer: parseAccountId(info.issuer_account),
      amount: 1,
      memoHash: paddedMemo(fromHex(initiated.user_hash)),
    });
    const stx = await signTx(txBytes, info.network_id, fromHex(state.privateKeyPkcs8));
    const submitted = await this.api.submitTransaction(toHex(stx));
    const expected = toHex(await txHash(txBytes, info.network_id));
    if (submitted.tx_hash !== expected) {
      throw new Error("server and client disagree on the transaction hash");
    }
    const record = await this.api.waitForTransaction(
      submitted.tx_hash,
      Math.max(20000, 3 * info.close_interval_ms + 5000),
    );
    if (record.result !== "APPLIED") {
      throw new Error(`ledger payment failed: ${record.result}`);
    }
    onStep("payment-applied");

    const confirmed = await this.api.confirmTransfer(
      initiated.user_hash,
      submitted.tx_hash,
    );
    onStep("confirmed");

    const qr = await this.api.qrPayload(confirmed.numeric_id);
    state.transfers[String(confirmed.numeric_id)] = {
      qrText: qr.qr_text,
      testId,
      companyId,
    };
    this.save();
    onStep("qr-shown");
    return { numericId: confirmed.numeric_id, qrText: qr.qr_text };
  }

  async showQr(numericId: number): Promise<string> {
    this.registered();
    const out = await this.api.qrPayload(numericId);
    return out.qr_text;
  }
}
