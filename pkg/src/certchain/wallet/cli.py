"""``certchain-wallet``: the end-user client.

Holds the signing key, registers the user, buys tokens, and runs the full
certificate send: initiate, pay on the ledger with the hash memo, confirm,
and print the numeric id plus QR payload. Every server error code maps to
its own exit code (see EXIT_CODES); --json switches output to one JSON
object per command.
"""

from __future__ import annotations

import json as jsonlib
import sys
from pathlib import Path

import click

from ..client import ApiClient, ApiError
from ..ledger import AccountId, Asset, Memo, Payment, Transaction, sign_transaction
from .state import WalletError, WalletState, load_wallet, save_wallet, wallet_lock

EXIT_CODES = {
    "NETWORK_ERROR": 10,
    "AUTH_FAILURE": 11,
    "DUPLICATE_KEY": 12,
    "NO_VALID_TEST": 13,
    "OVER_LIMIT": 14,
    "PAYMENT_REJECTED": 15,
    "SUPPLY_EXHAUSTED": 16,
    "UNKNOWN_TEST": 17,
    "EXPIRED": 18,
    "NOT_OWNER": 19,
    "UNKNOWN_COMPANY": 20,
    "INSUFFICIENT_TOKENS": 21,
    "NOT_FOUND": 22,
    "ALREADY_BACKFILLED": 23,
    "LEDGER_TX_MISSING": 24,
    "MEMO_MISMATCH": 25,
    "PARTY_MISMATCH": 26,
    "WRONG_ASSET": 27,
    "MALFORMED_PAYLOAD": 28,
    "UNKNOWN_USER": 29,
    "BAD_SEQUENCE": 30,
    "BAD_SIGNATURE": 31,
    "TX_NOT_FOUND": 32,
    "PAYMENT_FAILED": 33,
    "WALLET_ERROR": 40,
    "ALREADY_REGISTERED": 41,
    "NOT_REGISTERED": 42,
}


class Ctx:
    def __init__(self, server: str, wallet_file: Path, json_out: bool):
        self.server = server
        self.wallet_file = wallet_file
        self.json_out = json_out

    def api(self, token: str | None = None) -> ApiClient:
        return ApiClient(self.server, token=token)

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


def _guard(ctx: Ctx, fn):
    try:
        fn()
    except ApiError as exc:
        ctx.fail(exc.code, exc.detail or str(exc))
    except WalletError as exc:
        ctx.fail("WALLET_ERROR", str(exc))


def _registered(ctx: Ctx) -> WalletState:
    state = load_wallet(ctx.wallet_file)
    if not state.user_id:
        ctx.fail("NOT_REGISTERED", "wallet holds no registration; run `register`")
    return state


def _kyc_balance(account_json: dict) -> int:
    for line in account_json["balances"]:
        if line["asset_code"] == "KYC":
            return line["balance"]
    return 0


@click.group()
@click.option("--server", default="http://127.0.0.1:8100", show_default=True,
              envvar="CERTCHAIN_SERVER", help="Controller base URL.")
@click.option("--wallet-file", default="~/.certchain/wallet.json", show_default=True,
              envvar="CERTCHAIN_WALLET", help="Path of the wallet state file.")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(click_ctx, server, wallet_file, json_out):
    click_ctx.obj = Ctx(server, Path(wallet_file).expanduser(), json_out)


@main.command()
@click.option("--name", required=True)
@click.option("--national-id", required=True)
@click.pass_obj
def register(ctx: Ctx, name, national_id):
    """Generate keys locally and register with the controller."""

    def run():
        with wallet_lock(ctx.wallet_file):
            if ctx.wallet_file.exists():
                state = load_wallet(ctx.wallet_file)
                if state.user_id:
                    ctx.fail("ALREADY_REGISTERED", f"wallet is {state.user_id}")
            else:
                state = WalletState.fresh()
                save_wallet(ctx.wallet_file, state)
            api = ctx.api()
            out = api.register_user(name, national_id, state.keys.public_key)
            state.user_id = out["user_id"]
            state.auth_token = out["auth_token"]
            save_wallet(ctx.wallet_file, state)
            ctx.emit(
                {"user_id": state.user_id, "account_id": state.account.display},
                f"registered as {state.user_id} (account {state.account.display})",
            )

    _guard(ctx, run)


@main.command("list-labs")
@click.pass_obj
def list_labs(ctx: Ctx):
    """Show the accredited laboratories."""

    def run():
        labs = ctx.api().list_labs()
        if ctx.json_out:
            ctx.emit({"labs": labs}, "")
        elif not labs:
            click.echo("no labs")
        else:
            for lab in labs:
                click.echo(f"{lab['lab_id']}  {lab['name']}")

    _guard(ctx, run)


@main.command("list-tests")
@click.pass_obj
def list_tests(ctx: Ctx):
    """Show this user's unexpired tests."""

    def run():
        state = _registered(ctx)
        tests = ctx.api(state.auth_token).list_tests(state.user_id)
        if ctx.json_out:
            ctx.emit({"tests": tests}, "")
        elif not tests:
            click.echo("no valid tests")
        else:
            for t in tests:
                click.echo(f"{t['test_id']}  {t['test_type']}  valid until {t['valid_until']}")

    _guard(ctx, run)


@main.command()
@click.argument("n", type=int)
@click.option("--payment-proof", required=True,
              help="Proof accepted by the payment gateway, e.g. PAID:<total>.")
@click.pass_obj
def buy(ctx: Ctx, n, payment_proof):
    """Buy N tokens (requires a valid test on file)."""

    def run():
        state = _registered(ctx)
        api = ctx.api(state.auth_token)
        out = api.purchase(state.user_id, n, payment_proof)
        balance = _kyc_balance(api.ledger_account(state.account.display))
        ctx.emit(
            {"tx_hash": out["tx_hash"], "balance": balance},
            f"bought {n} KYC (tx {out['tx_hash'][:16]}...); balance is now {balance}",
        )

    _guard(ctx, run)


@main.command()
@click.pass_obj
def balance(ctx: Ctx):
    """Show the wallet's on-ledger token balance."""

    def run():
        state = _registered(ctx)
        api = ctx.api(state.auth_token)
        amount = _kyc_balance(api.ledger_account(state.account.display))
        ctx.emit({"balance": amount}, f"balance: {amount} KYC")

    _guard(ctx, run)


@main.command()
@click.argument("test_id")
@click.argument("company_id")
@click.pass_obj
def send(ctx: Ctx, test_id, company_id):
    """Send a certificate: initiate, pay 1 KYC with the hash memo, confirm.

    Safe to re-run after a crash: the pending send is persisted in the
    wallet and resumed without spending a second token.
    """

    def run():
        with wallet_lock(ctx.wallet_file):
            state = _registered(ctx)
            result = run_send_pipeline(ctx, state, test_id, company_id)
        ctx.emit(
            result,
            f"sent; numeric id {result['numeric_id']}\n{result['qr_text']}",
        )

    _guard(ctx, run)


def run_send_pipeline(ctx: Ctx, state: WalletState, test_id: str, company_id: str,
                      crash_after_payment: bool = False) -> dict:
    """The resumable send pipeline; ``crash_after_payment`` is a test hook."""
    api = ctx.api(state.auth_token)
    info = api.ledger_info()
    poll_timeout = max(20.0, 3 * info["close_interval_ms"] / 1000 + 5)

    pending = state.pending_send
    if pending and (pending["test_id"] != test_id or pending["company_id"] != company_id):
        raise WalletError(
            f"a send of {pending['test_id']} to {pending['company_id']} is pending; "
            "re-run that send first"
        )
    if pending is None:
        out = api.initiate_transfer(state.user_id, test_id, company_id)
        pending = {
            "test_id": test_id,
            "company_id": company_id,
            "user_hash": out["user_hash"],
            "destination_account": out["destination_account"],
            "stx": None,
            "tx_hash": None,
        }
        state.pending_send = pending
        save_wallet(ctx.wallet_file, state)

    if pending["stx"] is None:
        sequence = api.ledger_account(state.account.display)["sequence"] + 1
        asset = Asset("KYC", AccountId.parse(info["issuer_account"]))
        memo = Memo.hash(bytes.fromhex(pending["user_hash"]) + b"\x00" * 16)
        tx = Transaction(
            source=state.account,
            sequence=sequence,
            operations=(
                Payment(AccountId.parse(pending["destination_account"]), asset, 1),
            ),
            memo=memo,
        )
        stx = sign_transaction(tx, state.keys, info["network_id"])
        pending["stx"] = stx.to_bytes().hex()
        pending["tx_hash"] = tx.hash(info["network_id"]).hex()
        state.pending_send = pending
        save_wallet(ctx.wallet_file, state)  # payment is replay-safe from here

    try:
        api.submit_transaction(bytes.fromhex(pending["stx"]))
    except ApiError as exc:
        if exc.code != "BAD_SEQUENCE":
            raise
        # Sequence already consumed: this exact payment was submitted before
        # a crash. Fall through and wait for it.

    if crash_after_payment:
        raise SystemExit(99)

    record = api.wait_for_transaction(pending["tx_hash"], timeout_s=poll_timeout)
    if record["result"] != "APPLIED":
        state.pending_send = None
        save_wallet(ctx.wallet_file, state)
        raise ApiError("PAYMENT_FAILED", f"ledger payment failed: {record['result']}")

    confirmed = api.confirm_transfer(pending["user_hash"], pending["tx_hash"])
    numeric_id = confirmed["numeric_id"]
    qr_text = api.qr_payload(numeric_id)["qr_text"]
    state.transfers[str(numeric_id)] = {
        "qr_text": qr_text,
        "test_id": test_id,
        "company_id": company_id,
        "user_hash": pending["user_hash"],
        "tx_hash": pending["tx_hash"],
    }
    state.pending_send = None
    save_wallet(ctx.wallet_file, state)
    return {"numeric_id": numeric_id, "qr_text": qr_text}


@main.command("show-qr")
@click.argument("numeric_id", type=int)
@click.pass_obj
def show_qr(ctx: Ctx, numeric_id):
    """Retrieve the QR payload for a past send by its numeric id."""

    def run():
        state = _registered(ctx)
        try:
            out = ctx.api(state.auth_token).qr_payload(numeric_id)
        except ApiError as exc:
            cached = state.transfers.get(str(numeric_id))
            if exc.code == "NETWORK_ERROR" and cached:
                out = {"qr_text": cached["qr_text"]}
            else:
                raise
        ctx.emit(out, out["qr_text"])

    _guard(ctx, run)


if __name__ == "__main__":
    main()
