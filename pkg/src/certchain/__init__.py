"""certchain: private KYC-token ledger and health-certificate exchange."""

__version__ = "0.1.0"
