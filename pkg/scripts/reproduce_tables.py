"""Desk-scale reruns of the level/power and multiscale tables.

Usage: python scripts/reproduce_tables.py --reps 200 --out tables.json
"""

import argparse
import json

from rcshape.reproduce import REFERENCE_TABLES, format_rows, reproduce_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tables", default=",".join(REFERENCE_TABLES))
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", help="JSON with every row")
    args = ap.parse_args()

    blob = {}
    for table in args.tables.split(","):
        rows = reproduce_table(table, reps=args.reps, seed=args.seed, workers=args.workers)
        print(f"\n== {table} ({args.reps} replications)")
        print(format_rows(rows))
        blob[table] = [r.to_dict() for r in rows]
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(blob, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
