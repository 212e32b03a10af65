// The clerk's session: on-chain checks first, then the gated certificate
// fetch and local decryption, mirroring the reference verifier flow.

import { ApiClient, ApiError, TxRecord } from "./api.js";
import { fromHex, toHex } from "./codec.js";
import { openEnvelope, seedToPkcs8 } from "./crypto.js";
import { Certificate, Decision, decide, parseCertificate } from "./certificate.js";
import { encodePaymentTx, parseAccountId, signTx } from "./ledgertx.js";

export interface CompanyCredentials {
  companyId: string;
  authToken: string;
  encryptionPrivateKeyHex: string; // PKCS8 DER
  ledgerAccount: string;
  signingSeedHex: string;
  requiredResult: string;
}

export interface VerifyOutcome {
  onChainOk: boolean;
  failure: string | null; // error code when verification stopped early
  detail: string;
  certificate: Certificate | null;
  decision: Decision | null;
}

const QR_PREFIX = "KYCCERT:v1:";

export function parseQrText(text: string): string | null {
  const trimmed = text.trim();
  if (!trimmed.startsWith(QR_PREFIX) || trimmed.length !== QR_PREFIX.length + 64) {
    return null;
  }
  const hash = trimmed.slice(QR_PREFIX.length);
  return /^[0-9a-f]{64}$/.test(hash) ? hash : null;
}

export class CompanySession {
  constructor(
    public api: ApiClient,
    public credentials: CompanyCredentials,
  ) {
    this.api.token = credentials.authToken;
  }

  private fail(code: string, detail: string): VerifyOutcome {
    return { onChainOk: false, failure: code, detail, certificate: null, decision: null };
  }

  async verify(qrText: string): Promise<VerifyOutcome> {
    const blockHash = parseQrText(qrText);
    if (!blockHash) return this.fail("BAD_PAYLOAD", "not a certificate payload");

    let record: TxRecord;
    try {
      record = await this.api.ledgerTransaction(blockHash);
    } catch (exc) {
      if (exc instanceof ApiError && exc.code === "TX_NOT_FOUND") {
        return this.fail("LEDGER_TX_MISSING", "no such transaction on the ledger");
      }
      throw exc;
    }

    if (record.result !== "APPLIED") {
      return this.fail("LEDGER_TX_MISSING", `transaction result is ${record.result}`);
    }
    const op = record.operations.length === 1 ? record.operations[0] : undefined;
    if (!op || op.type !== "payment") {
      return this.fail("NOT_FOR_US", "not a single token payment");
    }
    if (op.destination !== this.credentials.ledgerAccount) {
      return this.fail("NOT_FOR_US", "payment was addressed to a different account");
    }
    if (op.asset_code !== "KYC") {
      return this.fail("NOT_FOR_US", `payment moves ${op.asset_code}, not KYC`);
    }
    if (record.memo.kind !== "hash" || !record.memo.data) {
      return this.fail("NOT_FOR_US", "transaction carries no hash memo");
    }
    const userHashHex = record.memo.data.slice(0, 32);

    let envelopeHex: string;
    try {
      envelopeHex = (await this.api.fetchCertificate(userHashHex)).envelope;
    } catch (exc) {
      if (exc instanceof ApiError) {
        return this.fail("FETCH_REFUSED", `${exc.code}: ${exc.detail}`);
      }
      throw exc;
    }

    let certificate: Certificate;
    try {
      const plain = await openEnvelope(
        envelopeHex,
        fromHex(this.credentials.encryptionPrivateKeyHex),
      );
      certificate = parseCertificate(plain);
    } catch {
      return this.fail("DECRYPT_FAILED", "envelope could not be opened");
    }

    const decision = decide(
      certificate,
      Date.now(),
      this.credentials.requiredResult,
    );
    return {
      onChainOk: true,
      failure: null,
      detail: "",
      certificate,
      decision,
    };
  }

  async returnTokens(n: number): Promise<{ credit: number; txHash: string }> {
    const info = await this.api.ledgerInfo();
    const account = await this.api.ledgerAccount(this.credentials.ledgerAccount);
    const balance =
      account.balances.find((b) => b.asset_code === "KYC")?.balance ?? 0;
    if (balance < n) {
      throw new ApiError("INSUFFICIENT_TOKENS", `balance is ${balance}`, 0);
    }
    const issuer = parseAccountId(info.issuer_account);
    const txBytes = encodePaymentTx({
      source: parseAccountId(this.credentials.ledgerAccount),
      sequence: account.sequence + 1,
      destination: issuer,
      assetCode: info.asset_code,
      assetIssuer: issuer,
      amount: n,
    });
    const privateKey = seedToPkcs8(fromHex(this.credentials.signingSeedHex));
    const stx = await signTx(txBytes, info.network_id, privateKey);
    const submitted = await this.api.submitTransaction(toHex(stx));
    const record = await this.api.waitForTransaction(
      submitted.tx_hash,
      Math.max(20000, 3 * info.close_interval_ms + 5000),
    );
    if (record.result !== "APPLIED") {
      throw new ApiError("PAYMENT_FAILED", record.result, 0);
    }
    const out = await this.api.buyBack(n, submitted.tx_hash);
    return { credit: out.credit, txHash: submitted.tx_hash };
  }
}
