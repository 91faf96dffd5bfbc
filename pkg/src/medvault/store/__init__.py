"""Untrusted storage service: encrypted tables and objects behind a binary
wire protocol. This package never sees keys or plaintext; it only stores
ciphertext and compares ciphertext bytes."""

from .client import StoreClient
from .service import StorageService, StoreServer

__all__ = ["StoreClient", "StorageService", "StoreServer"]
