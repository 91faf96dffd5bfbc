import pytest

from medvault.parser import DocumentFormat, RawDocument
from medvault.store.client import StoreClient
from medvault.store.service import StoreServer
from medvault.vault import VaultEngine

# the four base rows behind the monthly-rollup fixtures
VITALS_CSV = (
    "Date,Heart Rate,Cholesterol\n"
    "10/1/23,90,190\n"
    "10/10/23,80,150\n"
    "11/5/23,100,200\n"
    "11/24/23,90,220\n"
)

EXTRA_KEYWORDS = ("Medication", "Condition", "Treatment", "Time")


@pytest.fixture
def store_server(tmp_path):
    server = StoreServer(data_dir=str(tmp_path / "store-data")).start()
    yield server
    server.stop()


def make_engine(tmp_path, server, name="vault", extra_keywords=EXTRA_KEYWORDS) -> VaultEngine:
    vault_dir = tmp_path / name
    engine = VaultEngine(vault_dir, store=StoreClient("127.0.0.1", server.port))
    if extra_keywords:
        kw = vault_dir / "config" / "reserved_keywords.txt"
        kw.write_text(kw.read_text() + "\n".join(extra_keywords) + "\n")
        engine.close()
        engine = VaultEngine(vault_dir, store=StoreClient("127.0.0.1", server.port))
    return engine


@pytest.fixture
def engine(tmp_path, store_server):
    eng = make_engine(tmp_path, store_server)
    yield eng
    eng.close()


def vitals_doc(doc_id="vitals.csv", csv=VITALS_CSV) -> RawDocument:
    return RawDocument(doc_id, csv.encode(), DocumentFormat.TABULAR, "clinic")


def kv_doc(doc_id, text, source="test") -> RawDocument:
    return RawDocument(doc_id, text.encode(), DocumentFormat.KEYVALUE_TEXT, source)


def sharing_corpus() -> list:
    """Two-condition corpus: everything for one back ailment plus unrelated
    psychiatric records that a share for the back ailment must never leak."""
    return [
        vitals_doc(),
        RawDocument(
            "meds.csv",
            (
                "Date,Medication,Condition\n"
                "11/20/23,Naproxen,disc herniation\n"
                "11/21/23,Sertraline,OCD\n"
            ).encode(),
            DocumentFormat.TABULAR,
            "pharmacy",
        ),
        kv_doc(
            "pt.txt",
            "Date: 11/22/23\nTreatment: lumbar stabilization program\nCondition: disc herniation\n",
        ),
        kv_doc(
            "ocd-note.txt",
            "Date: 11/23/23\nCondition: OCD\nweekly therapy notes for obsessive compulsive disorder\n",
        ),
        RawDocument(
            "mri.bin",
            b"\x89MRI-PIXELS" * 64,
            DocumentFormat.OPAQUE_BINARY,
            "imaging",
            sidecar=b"Date: 11/15/23\nCondition: disc herniation\nResolution: 512x512\n",
            object_class_hint="MRI",
        ),
        RawDocument(
            "xray.bin",
            b"\x89XRAY-PIXELS" * 64,
            DocumentFormat.OPAQUE_BINARY,
            "imaging",
            sidecar=b"Date: 10/02/23\nCondition: disc herniation\n",
            object_class_hint="X-ray",
        ),
        RawDocument(
            "brain-mri.bin",
            b"\x89BRAIN-MRI" * 64,
            DocumentFormat.OPAQUE_BINARY,
            "imaging",
            sidecar=b"Date: 11/23/23\nCondition: OCD\n",
            object_class_hint="MRI",
        ),
    ]
