// Scripted session against a real controller: register -> buy -> send (all
// four steps) -> QR, then the clerk side verify -> GRANT and return-tokens.
// Every session request goes through a trace recorder, and the trace must
// stay within the documented API.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { bstr, concat, fromHex, toHex, utf8 } from "../src/codec.js";
import { CompanySession } from "../src/company.js";
import { sha256 } from "../src/crypto.js";
import { qrDataUrl } from "../src/qr.js";
import { KeyValueStore, SEND_STEPS, UserSession } from "../src/session.js";

const ADMIN_TOKEN = "frontend-e2e-admin";

const DOCUMENTED_ENDPOINTS = [
  /^POST \/users$/,
  /^GET \/labs$/,
  /^GET \/users\/[^/]+\/tests$/,
  /^POST \/purchases$/,
  /^POST \/transfers$/,
  /^POST \/transfers\/[0-9a-f]{32}\/confirm$/,
  /^GET \/qr\/\d+$/,
  /^POST \/certificates\/fetch$/,
  /^POST \/buybacks$/,
  /^GET \/ledger\/info$/,
  /^GET \/ledger\/accounts\/GA[0-9a-f]{64}$/,
  /^GET \/ledger\/transactions\/[0-9a-f]{64}$/,
  /^POST \/ledger\/transactions$/,
];

class MemoryStore implements KeyValueStore {
  private map = new Map<string, string>();
  get(key: string) {
    return this.map.get(key) ?? null;
  }
  set(key: string, value: string) {
    this.map.set(key, value);
  }
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const port = (srv.address() as { port: number }).port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

// Lab-side envelope sealing, used only for test setup; the server must be
// able to open envelopes produced by this implementation.
async function sealForLab(
  payload: Uint8Array,
  labPublicKeySpkiDer: Uint8Array,
): Promise<Uint8Array> {
  const subtle = globalThis.crypto.subtle;
  const rsa = await subtle.importKey(
    "spki",
    labPublicKeySpkiDer as BufferSource,
    { name: "RSA-OAEP", hash: "SHA-256" },
    false,
    ["encrypt"],
  );
  const sessionKey = crypto.getRandomValues(new Uint8Array(32));
  const nonce = crypto.getRandomValues(new Uint8Array(12));
  const aes = await subtle.importKey("raw", sessionKey as BufferSource, { name: "AES-GCM" }, false, [
    "encrypt",
  ]);
  const sealed = new Uint8Array(
    await subtle.encrypt({ name: "AES-GCM", iv: nonce as BufferSource, tagLength: 128 }, aes, payload as BufferSource),
  );
  const wrapped = new Uint8Array(
    await subtle.encrypt({ name: "RSA-OAEP" }, rsa, sessionKey as BufferSource),
  );
  return concat(
    new Uint8Array([1]),
    bstr(wrapped),
    bstr(nonce),
    bstr(sealed.slice(0, -16)),
    bstr(sealed.slice(-16)),
    bstr(await sha256(labPublicKeySpkiDer)),
  );
}

let server: ChildProcess;
let baseUrl: string;

async function adminPost(path: string, body: unknown): Promise<any> {
  const response = await fetch(baseUrl + path, {
    method: "POST",
    headers: {
      "Content-Type": "application/json",
      Authorization: `Bearer ${ADMIN_TOKEN}`,
    },
    body: JSON.stringify(body),
  });
  expect(response.ok, `${path}: ${response.status}`).toBe(true);
  return response.json();
}

beforeAll(async () => {
  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  const dir = mkdtempSync(join(tmpdir(), "certchain-frontend-"));
  const configPath = join(dir, "config.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      network_id: "certchain-frontend-e2e",
      kyc_supply: 10000,
      token_price: 5,
      max_tokens_per_purchase: 10,
      buyback_divisor: 5,
      test_validity_days: 30,
      close_interval_ms: 5000,
      close_mode: "on_demand",
      payment_rule: "paid-amount",
      admin_token: ADMIN_TOKEN,
      host: "127.0.0.1",
      port,
    }),
  );
  server = spawn(
    "certchain-server",
    ["--config", configPath, "--data-dir", join(dir, "data")],
    { stdio: "ignore" },
  );
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const r = await fetch(`${baseUrl}/ledger/info`);
      if (r.ok) break;
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("controller did not start");
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
});

afterAll(() => {
  server?.kill();
});

describe("web wallet end to end", () => {
  const trace: string[] = [];
  const recorded = (method: string, path: string) => trace.push(`${method} ${path}`);

  it("runs register -> buy -> send -> QR, then clerk verify -> GRANT", async () => {
    const lab = await adminPost("/labs", {
      name: "Frontend Lab",
      accreditation_evidence: "dossier",
    });
    const companyA = await adminPost("/companies", { name: "Company A" });
    const companyB = await adminPost("/companies", { name: "Company B" });

    // -- user session ------------------------------------------------
    const session = new UserSession(
      new ApiClient(baseUrl, recorded),
      new MemoryStore(),
    );
    const userId = await session.register("Browser User", "NID-77");
    expect(userId).toMatch(/^USR-/);

    const labs = await session.api.listLabs();
    expect(labs.map((l: { name: string }) => l.name)).toContain("Frontend Lab");

    // lab submits a result for this user (setup, outside the session)
    const submitted = {
      user_id: userId,
      test_type: "antibody",
      result: "negative",
      taken_at: Date.now(),
    };
    const envelope = await sealForLab(
      utf8(JSON.stringify(submitted)),
      fromHex(lab.lab_encryption_key),
    );
    const testResponse = await fetch(`${baseUrl}/tests`, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        Authorization: `Bearer ${lab.auth_token}`,
      },
      body: JSON.stringify({ lab_id: lab.lab_id, envelope: toHex(envelope) }),
    });
    expect(testResponse.ok).toBe(true);
    const { test_id } = await testResponse.json();

    const tests = await session.api.listTests(userId);
    expect(tests.map((t) => t.test_id)).toEqual([test_id]);

    const bought = await session.buy(3, "PAID:15");
    expect(bought.balance).toBe(3);

    const steps: string[] = [];
    const sent = await session.send(test_id, companyA.company_id, (step) =>
      steps.push(step),
    );
    expect(steps).toEqual(SEND_STEPS);
    expect(sent.qrText).toMatch(/^KYCCERT:v1:[0-9a-f]{64}$/);
    expect(sent.numericId).toBeGreaterThanOrEqual(1_000_000_000);
    expect(await session.balance()).toBe(2);

    const image = await qrDataUrl(sent.qrText);
    expect(image.startsWith("data:image/png;base64,")).toBe(true);

    // reload restores the QR from the numeric id
    expect(await session.showQr(sent.numericId)).toBe(sent.qrText);
    expect(session.cachedTransfers()).toHaveLength(1);

    // -- clerk session -------------------------------------------------
    const clerkA = new CompanySession(new ApiClient(baseUrl, recorded), {
      companyId: companyA.company_id,
      authToken: companyA.auth_token,
      encryptionPrivateKeyHex: companyA.encryption_private_key,
      ledgerAccount: companyA.ledger_account.account_id,
      signingSeedHex: companyA.ledger_account.signing_seed,
      requiredResult: "negative",
    });
    const outcome = await clerkA.verify(sent.qrText);
    expect(outcome.onChainOk).toBe(true);
    expect(outcome.decision).toBe("GRANT");
    expect(outcome.certificate).toMatchObject({
      test_id,
      user_name: "Browser User",
      test_type: submitted.test_type,
      result: submitted.result,
      taken_at: submitted.taken_at,
      lab_name: "Frontend Lab",
    });

    // a different company is turned away before any certificate reaches it
    const clerkB = new CompanySession(new ApiClient(baseUrl, recorded), {
      companyId: companyB.company_id,
      authToken: companyB.auth_token,
      encryptionPrivateKeyHex: companyB.encryption_private_key,
      ledgerAccount: companyB.ledger_account.account_id,
      signingSeedHex: companyB.ledger_account.signing_seed,
      requiredResult: "negative",
    });
    const refused = await clerkB.verify(sent.qrText);
    expect(refused.onChainOk).toBe(false);
    expect(refused.failure).toBe("NOT_FOR_US");
    expect(refused.certificate).toBeNull();

    // company A returns its token for credit (price 5 -> one fifth each)
    const returned = await clerkA.returnTokens(1);
    expect(returned.credit).toBe(1);

    // tampered code fails to parse
    const tampered = await clerkA.verify(sent.qrText.slice(0, -1) + "x");
    expect(tampered.failure).toBe("BAD_PAYLOAD");
  });

  it("never called an undocumented endpoint", () => {
    expect(trace.length).toBeGreaterThan(10);
    for (const entry of trace) {
      expect(
        DOCUMENTED_ENDPOINTS.some((pattern) => pattern.test(entry)),
        `undocumented request: ${entry}`,
      ).toBe(true);
    }
  });
});
