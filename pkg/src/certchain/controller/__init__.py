"""Controller service: HTTP API over registry, ledger, and crypto."""

from .api import create_app
from .config import ControllerConfig
from .service import CertificateDocument, ControllerService, ServiceError

__all__ = [
    "CertificateDocument",
    "ControllerConfig",
    "ControllerService",
    "ServiceError",
    "create_app",
]
