// Typed client for the controller's HTTP+JSON API. Every request is
// reported to an optional trace hook so sessions can prove they only touch
// documented endpoints.

export class ApiError extends Error {
  constructor(
    public code: string,
    public detail: string,
    public status: number,
  ) {
    super(`${code}: ${detail}`);
  }
}

export type TraceHook = (method: string, path: string) => void;

export interface LabEntry {
  lab_id: string;
  name: string;
}

export interface TestEntry {
  test_id: string;
  test_type: string;
  taken_at: number;
  valid_until: number;
  lab_id: string;
}

export interface LedgerInfo {
  network_id: string;
  issuer_account: string;
  asset_code: string;
  close_mode: string;
  close_interval_ms: number;
}

export interface TxRecord {
  tx_hash: string;
  ledger_sequence: number;
  result: string;
  source: string;
  sequence: number;
  memo: { kind: string; data: string | null };
  operations: Array<{
    type: string;
    destination?: string;
    asset_code?: string;
    asset_issuer?: string;
    amount?: number;
    new_id?: string;
  }>;
  signature: string;
}

export class ApiClient {
  token: string | null = null;

  constructor(
    private baseUrl: string,
    private onRequest?: TraceHook,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<any> {
    this.onRequest?.(method, path);
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (exc) {
      throw new ApiError("NETWORK_ERROR", String(exc), 0);
    }
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(
        payload.error ?? "HTTP_ERROR",
        payload.detail ?? response.statusText,
        response.status,
      );
    }
    return payload;
  }

  registerUser(name: string, nationalId: string, walletPublicKeyHex: string) {
    return this.request("POST", "/users", {
      name,
      national_id: nationalId,
      wallet_public_key: walletPublicKeyHex,
    }) as Promise<{ user_id: string; auth_token: string }>;
  }

  listLabs(): Promise<LabEntry[]> {
    return this.request("GET", "/labs").then((r) => r.labs);
  }

  listTests(userId: string): Promise<TestEntry[]> {
    return this.request("GET", `/users/${userId}/tests`).then((r) => r.tests);
  }

  purchase(userId: string, n: number, paymentProof: string) {
    return this.request("POST", "/purchases", {
      user_id: userId,
      n,
      payment_proof: paymentProof,
    }) as Promise<{ tx_hash: string }>;
  }

  initiateTransfer(userId: string, testId: string, companyId: string) {
    return this.request("POST", "/transfers", {
      user_id: userId,
      test_id: testId,
      company_id: companyId,
    }) as Promise<{ user_hash: string; destination_account: string }>;
  }

  confirmTransfer(userHashHex: string, blockHashHex: string) {
    return this.request("POST", `/transfers/${userHashHex}/confirm`, {
      block_hash: blockHashHex,
    }) as Promise<{ numeric_id: number }>;
  }

  qrPayload(numericId: number) {
    return this.request("GET", `/qr/${numericId}`) as Promise<{ qr_text: string }>;
  }

  fetchCertificate(userHashHex: string) {
    return this.request("POST", "/certificates/fetch", {
      user_hash: userHashHex,
    }) as Promise<{ envelope: string }>;
  }

  buyBack(n: number, returnTxHashHex: string) {
    return this.request("POST", "/buybacks", {
      n,
      return_tx_hash: returnTxHashHex,
    }) as Promise<{ credit: number }>;
  }

  ledgerInfo(): Promise<LedgerInfo> {
    return this.request("GET", "/ledger/info");
  }

  ledgerAccount(accountDisplay: string) {
    return this.request("GET", `/ledger/accounts/${accountDisplay}`) as Promise<{
      account_id: string;
      sequence: number;
      balances: Array<{ asset_code: string; asset_issuer: string; balance: number }>;
    }>;
  }

  ledgerTransaction(txHashHex: string): Promise<TxRecord> {
    return this.request("GET", `/ledger/transactions/${txHashHex}`);
  }

  submitTransaction(stxHex: string) {
    return this.request("POST", "/ledger/transactions", {
      stx: stxHex,
    }) as Promise<{ tx_hash: string }>;
  }

  async waitForTransaction(
    txHashHex: string,
    timeoutMs = 20000,
  ): Promise<TxRecord> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      try {
        return await this.ledgerTransaction(txHashHex);
      } catch (exc) {
        if (
          !(exc instanceof ApiError) ||
          exc.code !== "TX_NOT_FOUND" ||
          Date.now() > deadline
        ) {
          throw exc;
        }
        await new Promise((resolve) => setTimeout(resolve, 150));
      }
    }
  }
}
