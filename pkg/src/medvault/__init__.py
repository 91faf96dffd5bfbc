"""medvault: a patient-controlled health-record vault.

A trusted engine parses heterogeneous medical uploads into policy-managed
tables, enriches them, encrypts every cell with a query-capable scheme,
and outsources only ciphertext to an untrusted storage service that can
still execute point and range scans. Queries, selective sharing, and
user-confirmed extrapolations all run through the trusted side.
"""

from .config import VaultConfig, init_vault_dir
from .store.client import StoreClient
from .store.service import StorageService, StoreServer
from .vault import VaultEngine

__version__ = "0.1.0"

__all__ = [
    "VaultConfig",
    "VaultEngine",
    "StoreClient",
    "StoreServer",
    "StorageService",
    "init_vault_dir",
    "__version__",
]
