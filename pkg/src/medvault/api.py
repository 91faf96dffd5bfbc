"""HTTP facade over the vault engine for the web client.

JSON in, JSON out, bearer-token auth. This service runs on the trusted
side; the store keeps its own binary protocol and never sees these
payloads.
"""

from __future__ import annotations

import base64
from typing import List, Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from .errors import (
    AlreadyDecided,
    StoreUnavailable,
    UnknownProposal,
    UnrecognizedQuery,
    VaultError,
)
from .parser import DocumentFormat, RawDocument
from .vault import VaultEngine


class UploadDoc(BaseModel):
    doc_id: str
    declared_format: str
    source_label: str = ""
    text: Optional[str] = None
    content_b64: Optional[str] = None
    sidecar_text: Optional[str] = None
    object_class: Optional[str] = None


class UploadRequest(BaseModel):
    documents: List[UploadDoc] = Field(default_factory=list)


class QueryRequest(BaseModel):
    text: str


class ShareRequest(BaseModel):
    condition: str
    mode: str = "release"  # "preview" computes the manifest without a report


class ConfirmRequest(BaseModel):
    decision: str  # "accept" | "reject"


def create_app(engine: VaultEngine) -> FastAPI:
    app = FastAPI(title="medvault", version="0.1.0")

    def require_token(request: Request) -> None:
        expected = f"Bearer {engine.config.auth_token}"
        if request.headers.get("Authorization") != expected:
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = Depends(require_token)

    @app.post("/upload")
    def upload(body: UploadRequest, _: None = auth):
        docs = []
        for d in body.documents:
            try:
                fmt = DocumentFormat(d.declared_format)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown format {d.declared_format!r}")
            if d.content_b64 is not None:
                content = base64.b64decode(d.content_b64)
            elif d.text is not None:
                content = d.text.encode("utf-8")
            else:
                content = b""
            docs.append(
                RawDocument(
                    doc_id=d.doc_id,
                    content=content,
                    declared_format=fmt,
                    source_label=d.source_label,
                    sidecar=d.sidecar_text.encode("utf-8") if d.sidecar_text else None,
                    object_class_hint=d.object_class,
                )
            )
        try:
            return engine.upload_documents(docs).to_json()
        except StoreUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.post("/query")
    def query(body: QueryRequest, _: None = auth):
        try:
            return engine.query(body.text).to_json()
        except UnrecognizedQuery as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except StoreUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.post("/share")
    def share(body: ShareRequest, _: None = auth):
        if body.mode not in ("preview", "release"):
            raise HTTPException(status_code=422, detail="mode must be preview or release")
        try:
            return engine.share(body.condition, mode=body.mode).to_json()
        except StoreUnavailable as exc:
            raise HTTPException(status_code=503, detail=str(exc))

    @app.get("/pending")
    def pending(_: None = auth):
        return {"proposals": [p.to_json() for p in engine.pending_confirmations()]}

    @app.post("/confirm/{proposal_id}")
    def confirm(proposal_id: str, body: ConfirmRequest, _: None = auth):
        try:
            return engine.confirm_enrichment(proposal_id, body.decision)
        except UnknownProposal as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except AlreadyDecided as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except VaultError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/report/{report_id}")
    def report(report_id: str, _: None = auth):
        found = engine.get_report(report_id)
        if found is None:
            raise HTTPException(status_code=404, detail=f"no report {report_id}")
        return found

    @app.get("/schema")
    def schema(_: None = auth):
        """Summary the query builder caches: tables, columns, templates."""
        from .queries import TEMPLATES

        return {
            "tables": [
                {
                    "name": t.table_name,
                    "columns": [
                        {"name": c.name, "value_type": c.value_type, "encryption": c.encryption}
                        for c in t.columns
                    ],
                    "is_derived": t.is_derived,
                }
                for t in engine.registry.tables.values()
            ],
            "templates": list(TEMPLATES),
            "conditions": sorted(
                p.condition_label for p in engine.policy_store.sharing.values()
            ),
        }

    return app
