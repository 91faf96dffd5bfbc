#!/usr/bin/env python3
"""Run the trusted vault HTTP API (expects a reachable storage service)."""

import argparse
from pathlib import Path

import uvicorn

from medvault.api import create_app
from medvault.vault import VaultEngine


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--vault-dir", default="./vault")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8600)
    args = parser.parse_args()
    engine = VaultEngine(Path(args.vault_dir))
    uvicorn.run(create_app(engine), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
