"""HTTP client for the controller API, shared by the wallet and verifier."""

from __future__ import annotations

import time

import httpx


class ApiError(Exception):
    """A structured error response (or transport failure) from the server."""

    def __init__(self, code: str, detail: str = "", status: int = 0) -> None:
        super().__init__(detail or code)
        self.code = code
        self.detail = detail
        self.status = status


class ApiClient:
    def __init__(self, base_url: str, token: str | None = None, timeout: float = 10.0):
        self._http = httpx.Client(base_url=base_url, timeout=timeout)
        self.token = token

    def close(self) -> None:
        self._http.close()

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = self._http.request(method, path, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ApiError("NETWORK_ERROR", f"{type(exc).__name__}: {exc}") from exc
        if response.status_code >= 400:
            try:
                payload = response.json()
                raise ApiError(
                    payload.get("error", "HTTP_ERROR"),
                    payload.get("detail", response.text),
                    response.status_code,
                )
            except ValueError:
                raise ApiError("HTTP_ERROR", response.text, response.status_code) from None
        return response.json()

    # -- party endpoints -------------------------------------------------

    def register_user(self, name: str, national_id: str, wallet_public_key: bytes) -> dict:
        return self._request(
            "POST",
            "/users",
            {
                "name": name,
                "national_id": national_id,
                "wallet_public_key": wallet_public_key.hex(),
            },
        )

    def list_labs(self) -> list[dict]:
        return self._request("GET", "/labs")["labs"]

    def list_tests(self, user_id: str) -> list[dict]:
        return self._request("GET", f"/users/{user_id}/tests")["tests"]

    def purchase(self, user_id: str, n: int, payment_proof: str) -> dict:
        return self._request(
            "POST",
            "/purchases",
            {"user_id": user_id, "n": n, "payment_proof": payment_proof},
        )

    def initiate_transfer(self, user_id: str, test_id: str, company_id: str) -> dict:
        return self._request(
            "POST",
            "/transfers",
            {"user_id": user_id, "test_id": test_id, "company_id": company_id},
        )

    def confirm_transfer(self, user_hash_hex: str, block_hash_hex: str) -> dict:
        return self._request(
            "POST",
            f"/transfers/{user_hash_hex}/confirm",
            {"block_hash": block_hash_hex},
        )

    def qr_payload(self, numeric_id: int) -> dict:
        return self._request("GET", f"/qr/{numeric_id}")

    def fetch_certificate(self, user_hash_hex: str) -> dict:
        return self._request("POST", "/certificates/fetch", {"user_hash": user_hash_hex})

    def buy_back(self, n: int, return_tx_hash_hex: str) -> dict:
        return self._request(
            "POST", "/buybacks", {"n": n, "return_tx_hash": return_tx_hash_hex}
        )

    # -- ledger query surface -----------------------------------------------

    def ledger_info(self) -> dict:
        return self._request("GET", "/ledger/info")

    def ledger_account(self, account_id_display: str) -> dict:
        return self._request("GET", f"/ledger/accounts/{account_id_display}")

    def ledger_transaction(self, tx_hash_hex: str) -> dict:
        return self._request("GET", f"/ledger/transactions/{tx_hash_hex}")

    def submit_transaction(self, stx_bytes: bytes) -> dict:
        return self._request("POST", "/ledger/transactions", {"stx": stx_bytes.hex()})

    def wait_for_transaction(self, tx_hash_hex: str, timeout_s: float = 20.0) -> dict:
        """Poll until the transaction lands in a closed ledger."""
        deadline = time.monotonic() + timeout_s
        while True:
            try:
                return self.ledger_transaction(tx_hash_hex)
            except ApiError as exc:
                if exc.code not in ("TX_NOT_FOUND",) or time.monotonic() > deadline:
                    raise
                time.sleep(0.1)
