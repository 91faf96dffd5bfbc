"""Operator CLI. Verbs mirror the HTTP endpoints plus the two audits:
audit-leakage scans a store log dump for sentinel plaintext, oracle-diff
replays queries through the plaintext reference engine and diffs results.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from .config import VaultConfig, init_vault_dir
from .errors import VaultError
from .queries import ResultSet
from .store.client import StoreClient
from .store.service import serve as serve_store
from .values import display_scalar
from .vault import VaultEngine


def _engine(args) -> VaultEngine:
    return VaultEngine(Path(args.vault_dir))


def _print_resultset(rs: ResultSet) -> None:
    if rs.status == "needs_user_input":
        print("no sharing policy for that condition; define one in config/sharing_policies.json")
        return
    if rs.kind == "aggregate":
        print(display_scalar(rs.value) if rs.value is not None else "(no data)")
    for section in rs.sections:
        print(f"-- {section.table}")
        print("   " + " | ".join(section.columns))
        for row in section.rows:
            cells = []
            for b in row:
                text = display_scalar(b.value)
                if b.provenance == "extrapolated":
                    text += "*"
                elif b.provenance == "computed_aggregate":
                    text += "+"
                cells.append(text)
            print("   " + " | ".join(cells))
    if rs.sections:
        print("   (* extrapolated, + computed aggregate)")
    for obj in rs.objects:
        print(f"-- object {obj.handle}: {obj.object_class} captured {obj.captured}")
    if rs.manifest:
        print(f"manifest: {len(rs.manifest)} items, categories: {sorted(rs.released_categories)}")
    if rs.report_id:
        print(f"report: {rs.report_id}")


def cmd_init(args) -> int:
    init_vault_dir(Path(args.vault_dir), VaultConfig())
    print(f"initialized vault config under {args.vault_dir}/config")
    return 0


def cmd_serve_store(args) -> int:
    serve_store(args.host, args.port, args.data_dir)
    return 0


def cmd_serve_api(args) -> int:
    import uvicorn

    from .api import create_app

    engine = _engine(args)
    uvicorn.run(create_app(engine), host=args.host, port=args.port)
    return 0


def cmd_upload(args) -> int:
    engine = _engine(args)
    report = engine.upload_manifest(Path(args.manifest))
    for doc in report.docs:
        if doc.status == "ok":
            added = ", ".join(f"{t}+{n}" for t, n in doc.rows_added.items()) or "objects only"
            print(f"ok    {doc.doc_id}: {added}")
            for table, months in doc.derived_updated.items():
                print(f"      {table} updated for {', '.join(months)}")
        else:
            print(f"error {doc.doc_id}: {doc.error}")
    print("live rows:", json.dumps(report.table_counts))
    print("report:", report.report_id)
    return 0 if report.error_count == 0 else 1


def cmd_query(args) -> int:
    engine = _engine(args)
    _print_resultset(engine.query(args.text))
    return 0


def cmd_share(args) -> int:
    engine = _engine(args)
    rs = engine.share(args.condition, mode="preview" if args.preview else "release")
    _print_resultset(rs)
    return 0


def cmd_pending(args) -> int:
    engine = _engine(args)
    proposals = engine.pending_confirmations()
    if not proposals:
        print("no pending proposals")
    for p in proposals:
        print(
            f"{p.proposal_id}: {p.table}[row {p.row_handle}].{p.column} <- "
            f"{display_scalar(p.value)} (from {p.source_table} on {p.source_date})"
        )
    return 0


def cmd_confirm(args) -> int:
    engine = _engine(args)
    decision = "accept" if args.accept else "reject"
    out = engine.confirm_enrichment(args.proposal_id, decision)
    print(json.dumps(out))
    return 0


def cmd_report(args) -> int:
    engine = _engine(args)
    report = engine.get_report(args.report_id)
    if report is None:
        print(f"no report {args.report_id}", file=sys.stderr)
        return 1
    print(json.dumps(report, indent=2))
    return 0


def cmd_audit_leakage(args) -> int:
    engine = _engine(args)
    sentinels = [
        line.strip().encode("utf-8")
        for line in Path(args.sentinels).read_text().splitlines()
        if line.strip()
    ]
    matches = engine.audit_leakage(sentinels)
    entries = len(engine.dump_store_log())
    print(f"scanned {entries} observation-log entries against {len(sentinels)} sentinels")
    if matches:
        for m in matches:
            print(f"LEAK kind={m['kind']} sentinel={m['sentinel']!r}")
        return 1
    print("no sentinel plaintext found in the store's observation log")
    return 0


def cmd_oracle_diff(args) -> int:
    engine = _engine(args)
    if args.queries:
        queries = [q for q in Path(args.queries).read_text().splitlines() if q.strip()]
    else:
        queries = _sample_queries(engine, args.count, args.seed)
    result = engine.oracle_diff(queries)
    print(f"ran {result['total']} queries; {len(result['mismatches'])} mismatches")
    for m in result["mismatches"]:
        print("MISMATCH:", m["query"])
    return 0 if not result["mismatches"] else 1


def _sample_queries(engine: VaultEngine, count: int, seed: int) -> list[str]:
    """Random queries built from the live schema and data ranges."""
    rng = random.Random(seed)
    ref = engine.build_reference()
    months, dates, conditions = set(), [], set()
    for rows in ref.tables.values():
        for row in rows:
            d = row.get("Date")
            if d is not None:
                dates.append(d)
                months.add(f"{d.year:04d}-{d.month:02d}")
            if row.get("Condition"):
                conditions.add(str(row["Condition"]))
    conditions.update(p.condition_label for p in engine.policy_store.sharing.values())
    if not dates:
        return []
    numeric = ["Cholesterol", "Heart Rate"]
    out = []
    for _ in range(count):
        kind = rng.choice(["agg", "range", "share", "cond"])
        if kind == "agg":
            fn = rng.choice(["max", "min", "avg"])
            col = rng.choice(numeric)
            out.append(f"aggregate {fn} {col} in {rng.choice(sorted(months))}")
        elif kind == "range":
            a, b = sorted([rng.choice(dates), rng.choice(dates)])
            out.append(f"records from {a.isoformat()} to {b.isoformat()}")
        elif kind == "share" and conditions:
            out.append(f"share {rng.choice(sorted(conditions))}")
        else:
            out.append(
                f"records about {rng.choice(sorted(conditions))}" if conditions else "select Vital"
            )
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="medvault", description=__doc__)
    parser.add_argument("--vault-dir", default="./vault", help="trusted vault directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="write default config files").set_defaults(func=cmd_init)

    p = sub.add_parser("serve-store", help="run the untrusted storage service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7744)
    p.add_argument("--data-dir", default="./store-data")
    p.set_defaults(func=cmd_serve_store)

    p = sub.add_parser("serve-api", help="run the trusted HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8600)
    p.set_defaults(func=cmd_serve_api)

    p = sub.add_parser("upload", help="ingest documents listed in a manifest file")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("query", help="run a template query")
    p.add_argument("text")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("share", help="resolve a sharing request for a condition")
    p.add_argument("condition")
    p.add_argument("--preview", action="store_true", help="manifest only, no report file")
    p.set_defaults(func=cmd_share)

    sub.add_parser("pending", help="list extrapolation proposals").set_defaults(func=cmd_pending)

    p = sub.add_parser("confirm", help="accept or reject a proposal")
    p.add_argument("proposal_id")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--accept", action="store_true")
    g.add_argument("--reject", action="store_true")
    p.set_defaults(func=cmd_confirm)

    p = sub.add_parser("report", help="print a stored report")
    p.add_argument("report_id")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit-leakage", help="scan the store observation log for sentinels")
    p.add_argument("sentinels", help="file with one sentinel string per line")
    p.set_defaults(func=cmd_audit_leakage)

    p = sub.add_parser("oracle-diff", help="diff encrypted-path results against the reference engine")
    p.add_argument("--queries", help="file with one query per line")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_oracle_diff)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VaultError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
