"""``certchain-verifier``: the destination-company client.

Verifies a presented QR payload end to end: on-chain checks first (so a
misdirected code is rejected locally without a server round trip), then the
gated certificate fetch, decryption with the company's private key, and a
pure GRANT/DENY decision. Also returns collected tokens for buy-back.
"""

from __future__ import annotations

import json as jsonlib
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click

from ..client import ApiClient, ApiError
from ..controller.service import CertificateDocument
from ..crypto import DecryptFailed, SealedEnvelope, open_envelope, signing_keypair_from_seed
from ..ledger import AccountId, Asset, Memo, Payment, Transaction, sign_transaction
from ..qr import BadPayload, parse_qr_payload

EXIT_DENY = 3

EXIT_CODES = {
    "NETWORK_ERROR": 10,
    "AUTH_FAILURE": 11,
    "BAD_PAYLOAD": 50,
    "LEDGER_TX_MISSING": 51,
    "NOT_FOR_US": 52,
    "FETCH_REFUSED": 53,
    "DECRYPT_FAILED": 54,
    "INSUFFICIENT_TOKENS": 55,
    "ALREADY_CLAIMED": 56,
    "AMOUNT_MISMATCH": 57,
    "WRONG_DIRECTION": 58,
    "PAYMENT_FAILED": 59,
    "CONFIG_ERROR": 60,
}

_FETCH_REFUSALS = {"NOT_DESTINATION", "NOT_FOUND", "NOT_BACKFILLED"}


@dataclass
class CompanyConfig:
    server: str
    company_id: str
    auth_token: str
    encryption_private_key: bytes
    ledger_account: str
    signing_seed: bytes
    required_result: str = "negative"

    @classmethod
    def from_file(cls, path: Path) -> "CompanyConfig":
        obj = jsonlib.loads(Path(path).read_text())
        return cls(
            server=obj["server"],
            company_id=obj["company_id"],
            auth_token=obj["auth_token"],
            encryption_private_key=bytes.fromhex(obj["encryption_private_key"]),
            ledger_account=obj["ledger_account"],
            signing_seed=bytes.fromhex(obj["signing_seed"]),
            required_result=obj.get("required_result", "negative"),
        )


def decide(certificate: CertificateDocument, now_ms: int, required_result: str) -> str:
    """Pure service decision: GRANT only for a passing, unexpired result."""
    if certificate.result == required_result and now_ms < certificate.valid_until:
        return "GRANT"
    return "DENY"


class Ctx:
    def __init__(self, config: CompanyConfig, json_out: bool):
        self.config = config
        self.json_out = json_out

    def api(self) -> ApiClient:
        return ApiClient(self.config.server, token=self.config.auth_token)

    def emit(self, payload: dict, human: str) -> None:
        if self.json_out:
            click.echo(jsonlib.dumps(payload, indent=2))
        else:
            click.echo(human)

    def fail(self, code: str, detail: str) -> None:
        if self.json_out:
            click.echo(jsonlib.dumps({"error": code, "detail": detail}), err=True)
        else:
            click.echo(f"error [{code}]: {detail}", err=True)
        sys.exit(EXIT_CODES.get(code, 1))


@click.group()
@click.option("--company-config", "config_path", required=True,
              type=click.Path(exists=True), envvar="CERTCHAIN_COMPANY_CONFIG",
              help="JSON credentials file issued at onboarding.")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(click_ctx, config_path, json_out):
    try:
        config = CompanyConfig.from_file(Path(config_path))
    except (OSError, KeyError, ValueError, jsonlib.JSONDecodeError) as exc:
        click.echo(f"error [CONFIG_ERROR]: {exc}", err=True)
        sys.exit(EXIT_CODES["CONFIG_ERROR"])
    click_ctx.obj = Ctx(config, json_out)


def _single_payment(record: dict) -> dict | None:
    ops = record["operations"]
    if len(ops) == 1 and ops[0]["type"] == "payment":
        return ops[0]
    return None


@main.command()
@click.argument("qr_text")
@click.pass_obj
def verify(ctx: Ctx, qr_text):
    """Check a presented payload and decide service (exit 0 GRANT, 3 DENY)."""
    config = ctx.config
    try:
        block_hash = parse_qr_payload(qr_text)
    except BadPayload as exc:
        ctx.fail("BAD_PAYLOAD", str(exc))
        return

    api = ctx.api()
    try:
        record = api.ledger_transaction(block_hash.hex())
    except ApiError as exc:
        code = "LEDGER_TX_MISSING" if exc.code == "TX_NOT_FOUND" else exc.code
        ctx.fail(code, exc.detail or str(exc))
        return

    # On-chain checks run locally before any certificate fetch.
    if record["result"] != "APPLIED":
        ctx.fail("LEDGER_TX_MISSING", f"transaction result is {record['result']}")
    payment = _single_payment(record)
    if payment is None:
        ctx.fail("NOT_FOR_US", "transaction is not a single token payment")
    if payment["destination"] != config.ledger_account:
        ctx.fail("NOT_FOR_US", "payment was addressed to a different account")
    if payment["asset_code"] != "KYC":
        ctx.fail("NOT_FOR_US", f"payment moves {payment['asset_code']}, not KYC")
    if record["memo"]["kind"] != "hash":
        ctx.fail("NOT_FOR_US", "transaction carries no hash memo")
    user_hash_hex = record["memo"]["data"][:32]

    try:
        fetched = api.fetch_certificate(user_hash_hex)
    except ApiError as exc:
        code = "FETCH_REFUSED" if exc.code in _FETCH_REFUSALS else exc.code
        ctx.fail(code, exc.detail or str(exc))
        return

    try:
        envelope = SealedEnvelope.from_bytes(bytes.fromhex(fetched["envelope"]))
        plain = open_envelope(envelope, config.encryption_private_key)
    except (ValueError, DecryptFailed) as exc:
        ctx.fail("DECRYPT_FAILED", str(exc))
        return
    certificate = CertificateDocument.from_bytes(plain)

    decision = decide(certificate, int(time.time() * 1000), config.required_result)
    outcome = {
        "on_chain_ok": True,
        "certificate": certificate.to_json(),
        "decision": decision,
    }
    human = "\n".join(
        [
            f"on-chain: ok (tx {record['tx_hash'][:16]}...)",
            f"holder:   {certificate.user_name}",
            f"test:     {certificate.test_type} = {certificate.result} "
            f"(lab {certificate.lab_name})",
            f"valid until: {certificate.valid_until}",
            f"decision: {decision}",
        ]
    )
    ctx.emit(outcome, human)
    if decision != "GRANT":
        sys.exit(EXIT_DENY)


@main.command("return-tokens")
@click.argument("n", type=int)
@click.pass_obj
def return_tokens(ctx: Ctx, n):
    """Pay N tokens back to the issuer and claim the buy-back credit."""
    config = ctx.config
    api = ctx.api()
    try:
        account = api.ledger_account(config.ledger_account)
        balance = next(
            (l["balance"] for l in account["balances"] if l["asset_code"] == "KYC"), 0
        )
        if balance < n:
            ctx.fail("INSUFFICIENT_TOKENS", f"balance is {balance}, need {n}")
        info = api.ledger_info()
        issuer = AccountId.parse(info["issuer_account"])
        tx = Transaction(
            source=AccountId.parse(config.ledger_account),
            sequence=account["sequence"] + 1,
            operations=(Payment(issuer, Asset("KYC", issuer), n),),
            memo=Memo.none(),
        )
        keys = signing_keypair_from_seed(config.signing_seed)
        stx = sign_transaction(tx, keys, info["network_id"])
        tx_hash = api.submit_transaction(stx.to_bytes())["tx_hash"]
        record = api.wait_for_transaction(
            tx_hash, timeout_s=max(20.0, 3 * info["close_interval_ms"] / 1000 + 5)
        )
        if record["result"] != "APPLIED":
            ctx.fail("PAYMENT_FAILED", f"return payment failed: {record['result']}")
        out = api.buy_back(n, tx_hash)
    except ApiError as exc:
        ctx.fail(exc.code, exc.detail or str(exc))
        return
    ctx.emit(
        {"credit": out["credit"], "tx_hash": tx_hash},
        f"returned {n} tokens; credited {out['credit']}",
    )


if __name__ == "__main__":
    main()
