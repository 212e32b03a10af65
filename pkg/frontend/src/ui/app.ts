// DOM shell: a user tab walking register -> buy -> send -> QR with a step
// indicator, and a clerk tab for verify + return-tokens. Rendering is plain
// template strings over the session layer; no framework.

import { ApiClient, ApiError } from "../api.js";
import { CompanyCredentials, CompanySession, VerifyOutcome } from "../company.js";
import { qrDataUrl } from "../qr.js";
import { SEND_STEPS, SendStep, UserSession } from "../session.js";

const STEP_LABELS: Record<SendStep, string> = {
  "hash-issued": "hash issued",
  "payment-applied": "payment applied",
  confirmed: "confirmed",
  "qr-shown": "QR ready",
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function describe(exc: unknown): string {
  if (exc instanceof ApiError) return `[${exc.code}] ${exc.detail}`;
  return String(exc);
}

export function mountApp(root: HTMLElement, serverUrl: string): void {
  root.innerHTML = `
    <header>
      <h1>certchain wallet</h1>
      <nav>
        <button id="tab-user" class="active">user</button>
        <button id="tab-company">company clerk</button>
      </nav>
    </header>
    <main>
      <section id="view-user"></section>
      <section id="view-company" hidden></section>
    </main>
  `;
  const userView = el<HTMLElement>("view-user");
  const companyView = el<HTMLElement>("view-company");
  el<HTMLButtonElement>("tab-user").onclick = () => {
    userView.hidden = false;
    companyView.hidden = true;
  };
  el<HTMLButtonElement>("tab-company").onclick = () => {
    userView.hidden = true;
    companyView.hidden = false;
  };

  mountUserView(userView, serverUrl);
  mountCompanyView(companyView, serverUrl);
}

function mountUserView(view: HTMLElement, serverUrl: string): void {
  const browserStore = {
    get: (key: string) => localStorage.getItem(key),
    set: (key: string, value: string) => localStorage.setItem(key, value),
  };
  const session = new UserSession(new ApiClient(serverUrl), browserStore);

  view.innerHTML = `
    <div id="user-status" class="status"></div>
    <fieldset id="register-box">
      <legend>register</legend>
      <input id="reg-name" placeholder="full name">
      <input id="reg-nid" placeholder="national id">
      <button id="reg-go">register</button>
    </fieldset>
    <fieldset>
      <legend>laboratories</legend>
      <button id="labs-refresh">refresh</button>
      <ul id="labs-list"></ul>
    </fieldset>
    <fieldset>
      <legend>my tests</legend>
      <button id="tests-refresh">refresh</button>
      <ul id="tests-list"></ul>
    </fieldset>
    <fieldset>
      <legend>buy tokens</legend>
      <input id="buy-n" type="number" value="1" min="1">
      <input id="buy-proof" placeholder="payment proof (PAID:total)">
      <button id="buy-go">buy</button>
      <span id="buy-balance"></span>
    </fieldset>
    <fieldset>
      <legend>send certificate</legend>
      <input id="send-test" placeholder="test id">
      <input id="send-company" placeholder="destination company id">
      <button id="send-go">send</button>
      <ol id="send-steps">${SEND_STEPS.map(
        (s) => `<li data-step="${s}">${STEP_LABELS[s]}</li>`,
      ).join("")}</ol>
      <div id="send-result"></div>
    </fieldset>
    <fieldset>
      <legend>my QR codes</legend>
      <input id="qr-numeric" type="number" placeholder="numeric id">
      <button id="qr-go">show</button>
      <div id="qr-out"></div>
    </fieldset>
  `;

  const status = el<HTMLElement>("user-status");
  const refreshStatus = async () => {
    if (!session.userId) {
      status.textContent = "not registered yet";
      return;
    }
    try {
      const balance = await session.balance();
      status.textContent =
        `${session.userId} · ${session.accountDisplay} · balance ${balance} KYC`;
    } catch (exc) {
      status.textContent = describe(exc);
    }
  };
  void refreshStatus();

  el<HTMLButtonElement>("reg-go").onclick = async () => {
    try {
      await session.register(
        el<HTMLInputElement>("reg-name").value,
        el<HTMLInputElement>("reg-nid").value,
      );
      await refreshStatus();
    } catch (exc) {
      status.textContent = describe(exc);
    }
  };

  el<HTMLButtonElement>("labs-refresh").onclick = async () => {
    const labs = await session.api.listLabs();
    el<HTMLElement>("labs-list").innerHTML = labs.length
      ? labs.map((l) => `<li><code>${l.lab_id}</code> ${l.name}</li>`).join("")
      : "<li>no labs</li>";
  };

  el<HTMLButtonElement>("tests-refresh").onclick = async () => {
    if (!session.userId) return;
    try {
      const tests = await session.api.listTests(session.userId);
      el<HTMLElement>("tests-list").innerHTML = tests.length
        ? tests
            .map(
              (t) =>
                `<li><code>${t.test_id}</code> ${t.test_type}, valid until ${new Date(
                  t.valid_until,
                ).toISOString()}</li>`,
            )
            .join("")
        : "<li>no valid tests</li>";
    } catch (exc) {
      status.textContent = describe(exc);
    }
  };

  el<HTMLButtonElement>("buy-go").onclick = async () => {
    try {
      const out = await session.buy(
        Number(el<HTMLInputElement>("buy-n").value),
        el<HTMLInputElement>("buy-proof").value,
      );
      el<HTMLElement>("buy-balance").textContent = `balance: ${out.balance} KYC`;
      await refreshStatus();
    } catch (exc) {
      el<HTMLElement>("buy-balance").textContent = describe(exc);
    }
  };

  el<HTMLButtonElement>("send-go").onclick = async () => {
    const items = view.querySelectorAll<HTMLElement>("#send-steps li");
    items.forEach((item) => item.classList.remove("done"));
    const result = el<HTMLElement>("send-result");
    result.textContent = "";
    try {
      const sent = await session.send(
        el<HTMLInputElement>("send-test").value,
        el<HTMLInputElement>("send-company").value,
        (step) => {
          view
            .querySelector(`#send-steps li[data-step="${step}"]`)
            ?.classList.add("done");
        },
      );
      result.innerHTML = `numeric id <strong>${sent.numericId}</strong><br>` +
        `<img alt="certificate QR" src="${await qrDataUrl(sent.qrText)}">` +
        `<br><code>${sent.qrText}</code>`;
      await refreshStatus();
    } catch (exc) {
      result.textContent = describe(exc);
    }
  };

  el<HTMLButtonElement>("qr-go").onclick = async () => {
    const out = el<HTMLElement>("qr-out");
    try {
      const qrText = await session.showQr(
        Number(el<HTMLInputElement>("qr-numeric").value),
      );
      out.innerHTML =
        `<img alt="certificate QR" src="${await qrDataUrl(qrText)}">` +
        `<br><code>${qrText}</code>`;
    } catch (exc) {
      out.textContent = describe(exc);
    }
  };
}

function mountCompanyView(view: HTMLElement, serverUrl: string): void {
  view.innerHTML = `
    <fieldset>
      <legend>credentials</legend>
      <textarea id="company-creds" rows="6"
        placeholder='paste the onboarding JSON (company_id, auth_token, ...)'></textarea>
    </fieldset>
    <fieldset>
      <legend>verify a presented code</legend>
      <input id="verify-text" placeholder="KYCCERT:v1:...">
      <button id="verify-go">verify</button>
      <div id="verify-banner"></div>
      <dl id="verify-cert"></dl>
    </fieldset>
    <fieldset>
      <legend>return tokens</legend>
      <input id="return-n" type="number" value="1" min="1">
      <button id="return-go">return</button>
      <span id="return-out"></span>
    </fieldset>
  `;

  const loadSession = (): CompanySession => {
    const raw = JSON.parse(el<HTMLTextAreaElement>("company-creds").value);
    const credentials: CompanyCredentials = {
      companyId: raw.company_id,
      authToken: raw.auth_token,
      encryptionPrivateKeyHex: raw.encryption_private_key,
      ledgerAccount: raw.ledger_account.account_id ?? raw.ledger_account,
      signingSeedHex: raw.ledger_account.signing_seed ?? raw.signing_seed,
      requiredResult: raw.required_result ?? "negative",
    };
    return new CompanySession(new ApiClient(serverUrl), credentials);
  };

  const banner = () => el<HTMLElement>("verify-banner");

  el<HTMLButtonElement>("verify-go").onclick = async () => {
    const certList = el<HTMLElement>("verify-cert");
    certList.innerHTML = "";
    let outcome: VerifyOutcome;
    try {
      outcome = await loadSession().verify(el<HTMLInputElement>("verify-text").value);
    } catch (exc) {
      banner().className = "banner deny";
      banner().textContent = describe(exc);
      return;
    }
    if (!outcome.onChainOk) {
      banner().className = "banner deny";
      banner().textContent = `${outcome.failure}: ${outcome.detail}`;
      return;
    }
    banner().className = `banner ${outcome.decision === "GRANT" ? "grant" : "deny"}`;
    banner().textContent = outcome.decision!;
    const cert = outcome.certificate!;
    certList.innerHTML = Object.entries(cert)
      .map(([k, v]) => `<dt>${k}</dt><dd>${v}</dd>`)
      .join("");
  };

  el<HTMLButtonElement>("return-go").onclick = async () => {
    const out = el<HTMLElement>("return-out");
    try {
      const result = await loadSession().returnTokens(
        Number(el<HTMLInputElement>("return-n").value),
      );
      out.textContent = `credited ${result.credit}`;
    } catch (exc) {
      out.textContent = describe(exc);
    }
  };
}
