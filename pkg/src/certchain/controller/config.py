"""Controller configuration, loadable from a JSON key/value file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

CLOSE_MODES = ("timer", "on_demand")
PAYMENT_RULES = ("paid-amount", "accept-all", "reject-all")

MS_PER_DAY = 86_400_000


@dataclass
class ControllerConfig:
    network_id: str = "certchain-private"
    kyc_supply: int = 1_000_000
    token_price: int = 5
    max_tokens_per_purchase: int = 10
    buyback_divisor: int = 5
    test_validity_days: int = 30
    close_interval_ms: int = 5000
    close_mode: str = "timer"
    payment_rule: str = "paid-amount"
    admin_token: str = field(default="", repr=False)
    host: str = "127.0.0.1"
    port: int = 8100

    def __post_init__(self) -> None:
        if self.close_mode not in CLOSE_MODES:
            raise ValueError(f"close_mode must be one of {CLOSE_MODES}")
        if self.payment_rule not in PAYMENT_RULES:
            raise ValueError(f"payment_rule must be one of {PAYMENT_RULES}")
        for name in ("kyc_supply", "token_price", "max_tokens_per_purchase",
                     "buyback_divisor", "test_validity_days", "close_interval_ms"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.admin_token:
            raise ValueError("admin_token must be set")

    @property
    def test_validity_ms(self) -> int:
        return self.test_validity_days * MS_PER_DAY

    def buyback_credit(self, n: int) -> int:
        """Credit for returning ``n`` tokens: floor(n * price / divisor)."""
        return n * self.token_price // self.buyback_divisor

    @classmethod
    def from_file(cls, path: Path) -> "ControllerConfig":
        with open(path) as fh:
            return cls(**json.load(fh))

    def to_file(self, path: Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")
