"""HTTP+JSON surface over the controller service.

All byte-valued fields travel as lowercase hex strings. Authentication is a
bearer token: the configured admin token for onboarding endpoints, and
controller-signed party tokens (issued at onboarding) everywhere else.
Errors come back as ``{"error": <CODE>, "detail": <message>}`` with the
status from the service's error table.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, Header
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ..codec import CodecError
from ..crypto import SealedEnvelope, UserHash
from ..ledger import AccountId, LedgerError, SignedTransaction, TransactionRecord
from ..ledger.model import ChangeTrust, CreateAccount, MemoKind, Payment
from .auth import ROLE_COMPANY, ROLE_LAB, ROLE_USER
from .service import ControllerService, ServiceError


class LabBody(BaseModel):
    name: str
    accreditation_evidence: str = ""


class CompanyBody(BaseModel):
    name: str


class UserBody(BaseModel):
    name: str
    national_id: str
    wallet_public_key: str


class TestBody(BaseModel):
    lab_id: str
    envelope: str


class PurchaseBody(BaseModel):
    user_id: str
    n: int
    payment_proof: str


class TransferBody(BaseModel):
    user_id: str
    test_id: str
    company_id: str


class ConfirmBody(BaseModel):
    block_hash: str


class FetchBody(BaseModel):
    user_hash: str


class BuybackBody(BaseModel):
    n: int
    return_tx_hash: str


class SubmitTxBody(BaseModel):
    stx: str


def _hex_bytes(value: str, length: int | None, what: str) -> bytes:
    try:
        data = bytes.fromhex(value)
    except ValueError:
        raise ServiceError("MALFORMED_PAYLOAD", f"{what} is not hex") from None
    if length is not None and len(data) != length:
        raise ServiceError("MALFORMED_PAYLOAD", f"{what} must be {length} bytes")
    return data


def _operation_json(op) -> dict:
    if isinstance(op, Payment):
        return {
            "type": "payment",
            "destination": op.destination.display,
            "asset_code": op.asset.code,
            "asset_issuer": op.asset.issuer.display,
            "amount": op.amount,
        }
    if isinstance(op, CreateAccount):
        return {"type": "create_account", "new_id": op.new_id.display}
    if isinstance(op, ChangeTrust):
        return {
            "type": "change_trust",
            "asset_code": op.asset.code,
            "asset_issuer": op.asset.issuer.display,
        }
    raise ValueError(f"unknown operation {op!r}")


def _record_json(record: TransactionRecord) -> dict:
    tx = record.stx.tx
    memo = tx.memo
    return {
        "tx_hash": record.tx_hash.hex(),
        "ledger_sequence": record.ledger_sequence,
        "result": record.result,
        "source": tx.source.display,
        "sequence": tx.sequence,
        "memo": {
            "kind": "hash" if memo.kind is MemoKind.HASH else "none",
            "data": memo.data.hex() if memo.kind is MemoKind.HASH else None,
        },
        "operations": [_operation_json(op) for op in tx.operations],
        "signature": record.stx.signature.hex(),
    }


def create_app(service: ControllerService) -> FastAPI:
    app = FastAPI(title="certchain controller", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def service_error(_, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": exc.code, "detail": str(exc)},
        )

    def bearer(authorization: str | None = Header(default=None)) -> str:
        if not authorization or not authorization.startswith("Bearer "):
            raise ServiceError("AUTH_FAILURE", "missing bearer token")
        return authorization[len("Bearer ") :]

    def admin(token: str = Depends(bearer)) -> None:
        if token != service.config.admin_token:
            raise ServiceError("AUTH_FAILURE", "controller authentication failed")

    def role_guard(role: str):
        def guard(token: str = Depends(bearer)) -> str:
            verified = service.tokens.verify(token)
            if verified is None or verified[0] != role:
                raise ServiceError("AUTH_FAILURE", f"a {role} token is required")
            return verified[1]

        return guard

    user_auth = role_guard(ROLE_USER)
    lab_auth = role_guard(ROLE_LAB)
    company_auth = role_guard(ROLE_COMPANY)

    # -- onboarding ----------------------------------------------------

    @app.post("/labs")
    def onboard_lab(body: LabBody, _=Depends(admin)):
        return service.onboard_lab(body.name, body.accreditation_evidence)

    @app.post("/companies")
    def onboard_company(body: CompanyBody, _=Depends(admin)):
        return service.onboard_company(body.name)

    @app.post("/users")
    def register_user(body: UserBody):
        key = _hex_bytes(body.wallet_public_key, 32, "wallet_public_key")
        return service.register_user(body.name, body.national_id, key)

    @app.get("/labs")
    def list_labs():
        return {"labs": service.list_labs()}

    # -- tests -----------------------------------------------------------

    @app.post("/tests")
    def submit_test(body: TestBody, lab_id: str = Depends(lab_auth)):
        if body.lab_id != lab_id:
            raise ServiceError("AUTH_FAILURE", "token does not match lab_id")
        try:
            envelope = SealedEnvelope.from_bytes(_hex_bytes(body.envelope, None, "envelope"))
        except CodecError as exc:
            raise ServiceError("MALFORMED_PAYLOAD", f"bad envelope: {exc}") from None
        return service.submit_test(lab_id, envelope)

    @app.get("/users/{user_id}/tests")
    def user_tests(user_id: str, subject: str = Depends(user_auth)):
        if subject != user_id:
            raise ServiceError("NOT_OWNER", "token does not match user")
        return {"tests": service.list_valid_tests(user_id)}

    # -- purchase and transfer ---------------------------------------------

    @app.post("/purchases")
    def purchase(body: PurchaseBody, subject: str = Depends(user_auth)):
        if subject != body.user_id:
            raise ServiceError("NOT_OWNER", "token does not match user")
        return service.purchase_tokens(body.user_id, body.n, body.payment_proof)

    @app.post("/transfers")
    def initiate_transfer(body: TransferBody, subject: str = Depends(user_auth)):
        if subject != body.user_id:
            raise ServiceError("NOT_OWNER", "token does not match user")
        return service.initiate_transfer(body.user_id, body.test_id, body.company_id)

    @app.post("/transfers/{user_hash}/confirm")
    def confirm_transfer(user_hash: str, body: ConfirmBody, _=Depends(user_auth)):
        return service.confirm_transfer(
            UserHash(_hex_bytes(user_hash, 16, "user_hash")),
            _hex_bytes(body.block_hash, 32, "block_hash"),
        )

    @app.get("/qr/{numeric_id}")
    def qr_payload(numeric_id: int, subject: str = Depends(user_auth)):
        return service.get_qr_payload(numeric_id, subject)

    # -- company side ---------------------------------------------------------

    @app.post("/certificates/fetch")
    def fetch_certificate(body: FetchBody, company_id: str = Depends(company_auth)):
        envelope = service.fetch_certificate(
            company_id, UserHash(_hex_bytes(body.user_hash, 16, "user_hash"))
        )
        return {"envelope": envelope.to_bytes().hex()}

    @app.post("/buybacks")
    def buy_back(body: BuybackBody, company_id: str = Depends(company_auth)):
        return service.buy_back(
            company_id, body.n, _hex_bytes(body.return_tx_hash, 32, "return_tx_hash")
        )

    # -- ledger query surface ---------------------------------------------------

    @app.get("/ledger/info")
    def ledger_info():
        return {
            "network_id": service.ledger.network_id,
            "issuer_account": service.ledger.controller_account.display,
            "asset_code": service.ledger.kyc_asset.code,
            "close_mode": service.config.close_mode,
            "close_interval_ms": service.config.close_interval_ms,
        }

    @app.get("/ledger/accounts/{account_id}")
    def ledger_account(account_id: str):
        try:
            account = AccountId.parse(account_id)
        except ValueError:
            raise ServiceError("MALFORMED_PAYLOAD", "bad account id") from None
        try:
            sequence = service.ledger.account_sequence(account)
            trustlines = service.ledger.account_trustlines(account)
        except LedgerError as exc:
            raise ServiceError(exc.code, str(exc)) from None
        return {
            "account_id": account.display,
            "sequence": sequence,
            "balances": [
                {
                    "asset_code": asset.code,
                    "asset_issuer": asset.issuer.display,
                    "balance": balance,
                }
                for asset, balance in sorted(
                    trustlines.items(), key=lambda kv: kv[0].code
                )
            ],
        }

    @app.get("/ledger/transactions/{tx_hash}")
    def ledger_transaction(tx_hash: str):
        try:
            record = service.ledger.get_transaction(
                _hex_bytes(tx_hash, 32, "tx_hash")
            )
        except LedgerError as exc:
            raise ServiceError(exc.code, str(exc)) from None
        return _record_json(record)

    @app.post("/ledger/transactions")
    def submit_transaction(body: SubmitTxBody):
        try:
            stx = SignedTransaction.from_bytes(_hex_bytes(body.stx, None, "stx"))
        except (CodecError, ValueError) as exc:
            raise ServiceError("MALFORMED_PAYLOAD", f"bad transaction: {exc}") from None
        return {"tx_hash": service.submit_raw(stx).hex()}

    @app.post("/ledger/close")
    def close_ledger(_=Depends(admin)):
        block = service.ledger.close_ledger(service.clock())
        return {
            "sequence": block.sequence,
            "block_digest": block.block_digest.hex(),
            "tx_count": len(block.txs),
        }

    return app
