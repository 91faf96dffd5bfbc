"""Exception hierarchy shared across the vault engine and the storage service."""


class VaultError(Exception):
    """Base class for all vault-side failures."""


# --- ingestion ---------------------------------------------------------------

class EmptyDocument(VaultError):
    """Uploaded document has no usable content."""


class MalformedTabular(VaultError):
    """Tabular document row arity does not match its header."""


class MissingTimestampColumn(VaultError):
    """Time-series document lacks a parsable timestamp column."""


class UnknownFormat(VaultError):
    """Manifest declares a format the parser does not support."""


# --- schema ------------------------------------------------------------------

class SchemaConflict(VaultError):
    """Same table name with an incompatible column set; requires user review."""


# --- crypto ------------------------------------------------------------------

class WrongScheme(VaultError):
    """Key or column used with the wrong encryption scheme."""


class DecryptAuthFailure(VaultError):
    """Ciphertext failed authentication; treated as tampering."""


class DomainOverflow(VaultError):
    """Value lies outside the declared domain of an order-preserving column."""


# --- storage service ---------------------------------------------------------

class StoreError(VaultError):
    """Base class for errors raised by or about the storage service."""


class UnknownTable(StoreError):
    """Operation references a table id never registered with the store."""


class UnknownObject(StoreError):
    """Object handle does not exist."""


class SchemeMismatch(StoreError):
    """Scan kind does not match the column's registered scheme."""


class InvertedRange(StoreError):
    """Range scan called with lo > hi."""


class MalformedRequest(StoreError):
    """Request frame could not be decoded."""


class StoreUnavailable(StoreError):
    """Storage service unreachable; ingestion aborts atomically."""


# --- queries -----------------------------------------------------------------

class UnrecognizedQuery(VaultError):
    """Query text matches none of the supported templates."""


# --- confirmations -----------------------------------------------------------

class UnknownProposal(VaultError):
    """No pending proposal with that id."""


class AlreadyDecided(VaultError):
    """Proposal was already accepted or rejected."""
