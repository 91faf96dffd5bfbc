#!/usr/bin/env python3
"""Run the untrusted storage service standalone."""

import argparse

from medvault.store.service import serve


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7744)
    parser.add_argument("--data-dir", default="./store-data")
    args = parser.parse_args()
    serve(args.host, args.port, args.data_dir)


if __name__ == "__main__":
    main()
