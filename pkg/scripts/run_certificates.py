"""Runs every oracle suite and writes one JSON certificate per suite.

  python scripts/run_certificates.py --out-dir results/certificates
"""

import argparse
import json
import pathlib
import sys
import time

from hidden_dpsgd import suites
from hidden_dpsgd.cli import _json_default


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("results/certificates"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    all_pass = True
    for name in suites.SUITES:
        start = time.perf_counter()
        cert = suites.run_suite(name, seed=args.seed)
        elapsed = time.perf_counter() - start
        (args.out_dir / f"{name}.json").write_text(json.dumps(cert, indent=2, default=_json_default))
        worst = max(r["max_slack"] for r in cert["records"])
        print(f"{name:12s} {'PASS' if cert['pass'] else 'FAIL'}  {len(cert['records']):3d} checks  "
              f"max slack {worst:+.3e}  {elapsed:.2f}s")
        all_pass &= cert["pass"]
    sys.exit(0 if all_pass else 2)


if __name__ == "__main__":
    main()
