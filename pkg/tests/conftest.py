import json
import socket
import threading
import time

import pytest
import uvicorn

from certchain.controller import ControllerConfig, ControllerService
from certchain.crypto import (
    SigningKeyPair,
    UserHash,
    gen_signing_keypair,
    seal,
    signing_keypair_from_seed,
)
from certchain.ledger import (
    AccountId,
    CreateAccount,
    Ledger,
    Memo,
    Payment,
    Transaction,
    sign_transaction,
)

BASE_CLOSE_MS = 1_700_000_000_000
ADMIN_TOKEN = "admin-secret-for-tests"


class LedgerHarness:
    """Builds and drives a ledger with sequence tracking per signer."""

    def __init__(self, network_id="certchain-test", supply=1_000_000, log_path=None,
                 controller_keys=None):
        self.network_id = network_id
        self.controller = controller_keys or gen_signing_keypair()
        self.ledger = Ledger.create_network(
            network_id, self.controller, supply, log_path=log_path
        )
        self.clock_ms = BASE_CLOSE_MS
        self._next_seq: dict[bytes, int] = {}

    @property
    def controller_account(self) -> AccountId:
        return self.ledger.controller_account

    @property
    def kyc(self):
        return self.ledger.kyc_asset

    def next_sequence(self, keys: SigningKeyPair) -> int:
        if keys.public_key not in self._next_seq:
            self._next_seq[keys.public_key] = (
                self.ledger.account_sequence(AccountId(keys.public_key)) + 1
            )
        return self._next_seq[keys.public_key]

    def build(self, keys: SigningKeyPair, ops, memo=None, sequence=None):
        tx = Transaction(
            source=AccountId(keys.public_key),
            sequence=self.next_sequence(keys) if sequence is None else sequence,
            operations=tuple(ops),
            memo=memo or Memo.none(),
        )
        return sign_transaction(tx, keys, self.network_id)

    def submit(self, keys: SigningKeyPair, ops, memo=None):
        stx = self.build(keys, ops, memo)
        receipt = self.ledger.submit(stx)
        self._next_seq[keys.public_key] = stx.tx.sequence + 1
        return receipt

    def close(self):
        self.clock_ms += 5000
        return self.ledger.close_ledger(self.clock_ms)

    def new_account(self, keys=None, close=True) -> SigningKeyPair:
        keys = keys or gen_signing_keypair()
        self.submit(self.controller, [CreateAccount(AccountId(keys.public_key))])
        if close:
            self.close()
        return keys

    def issue(self, to_keys: SigningKeyPair, amount: int, close=True):
        receipt = self.submit(
            self.controller,
            [Payment(AccountId(to_keys.public_key), self.kyc, amount)],
        )
        if close:
            self.close()
        return receipt

    def pay(self, from_keys, to_account: AccountId, amount: int, memo=None, close=True):
        receipt = self.submit(
            from_keys, [Payment(to_account, self.kyc, amount)], memo=memo
        )
        if close:
            self.close()
        return receipt

    def balance(self, keys: SigningKeyPair) -> int:
        return self.ledger.get_balance(AccountId(keys.public_key), self.kyc)


@pytest.fixture
def harness():
    return LedgerHarness()


def fixed_keys(tag: int) -> SigningKeyPair:
    return signing_keypair_from_seed(bytes([tag]) * 32)


class FakeClock:
    def __init__(self, start_ms=BASE_CLOSE_MS):
        self.now_ms = start_ms

    def __call__(self) -> int:
        return self.now_ms

    def advance(self, ms: int) -> None:
        self.now_ms += ms


def make_config(**overrides) -> ControllerConfig:
    defaults = dict(
        network_id="certchain-test",
        kyc_supply=50_000,
        token_price=5,
        max_tokens_per_purchase=10,
        close_mode="on_demand",
        admin_token=ADMIN_TOKEN,
    )
    defaults.update(overrides)
    return ControllerConfig(**defaults)


class ServiceScenario:
    """Drives a ControllerService through the end-user protocol steps."""

    def __init__(self, service: ControllerService, clock: FakeClock):
        self.service = service
        self.clock = clock
        self.lab_keys: dict[str, bytes] = {}  # lab_id -> channel public key

    def onboard_lab(self, name="Lab A") -> str:
        out = self.service.onboard_lab(name, "accreditation dossier")
        self.lab_keys[out["lab_id"]] = bytes.fromhex(out["lab_encryption_key"])
        return out["lab_id"]

    def onboard_company(self, name="Company") -> dict:
        return self.service.onboard_company(name)

    def register_user(self, name="Pat Example"):
        keys = gen_signing_keypair()
        out = self.service.register_user(name, f"NID-{name}", keys.public_key)
        return out["user_id"], keys

    def submit_test(self, lab_id, user_id, result="negative", test_type="antibody",
                    biometric=None) -> str:
        payload = {
            "user_id": user_id,
            "test_type": test_type,
            "result": result,
            "taken_at": self.clock(),
        }
        if biometric is not None:
            payload["biometric_digest"] = biometric
        envelope = seal(
            json.dumps(payload).encode(), self.lab_keys[lab_id]
        )
        return self.service.submit_test(lab_id, envelope)["test_id"]

    def buy(self, user_id, n) -> str:
        proof = f"PAID:{n * self.service.config.token_price}"
        return self.service.purchase_tokens(user_id, n, proof)["tx_hash"]

    def pay_with_memo(self, keys: SigningKeyPair, destination: AccountId,
                      amount: int, memo_bytes: bytes) -> bytes:
        ledger = self.service.ledger
        tx = Transaction(
            source=AccountId(keys.public_key),
            sequence=ledger.account_sequence(AccountId(keys.public_key)) + 1,
            operations=(Payment(destination, ledger.kyc_asset, amount),),
            memo=Memo.hash(memo_bytes),
        )
        stx = sign_transaction(tx, keys, ledger.network_id)
        return self.service.submit_raw(stx)

    def send_certificate(self, user_id, keys, test_id, company_id) -> dict:
        """initiate -> memo payment -> confirm; returns ids and hashes."""
        out = self.service.initiate_transfer(user_id, test_id, company_id)
        user_hash = bytes.fromhex(out["user_hash"])
        destination = AccountId.parse(out["destination_account"])
        tx_hash = self.pay_with_memo(keys, destination, 1, user_hash + b"\x00" * 16)
        confirmed = self.service.confirm_transfer(UserHash(user_hash), tx_hash)
        return {
            "user_hash": user_hash,
            "tx_hash": tx_hash,
            "numeric_id": confirmed["numeric_id"],
        }


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def service(tmp_path, clock):
    svc = ControllerService.create(make_config(), tmp_path / "controller", clock=clock)
    yield svc
    svc.stop()


@pytest.fixture
def scenario(service, clock):
    return ServiceScenario(service, clock)


class LiveServer:
    """A real uvicorn server over a fresh controller, on a free port."""

    def __init__(self, data_dir, **config_overrides):
        from certchain.controller import create_app

        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            self.port = sock.getsockname()[1]
        # real wall clock: clients compute expiry against time.time()
        self.config = make_config(port=self.port, **config_overrides)
        self.service = ControllerService.create(self.config, data_dir)
        self.service.start()
        self._server = uvicorn.Server(
            uvicorn.Config(
                create_app(self.service),
                host="127.0.0.1",
                port=self.port,
                log_level="error",
            )
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("test server did not start")
            time.sleep(0.01)
        self.url = f"http://127.0.0.1:{self.port}"
        self.admin_token = self.config.admin_token

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=5)
        self.service.stop()


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(tmp_path / "server")
    yield server
    server.stop()
