#!/usr/bin/env python3
"""Regenerate the vendored evaluation snapshot at data/owid_snapshot.csv.

The file is fully determined by the seed, so regeneration is a no-op unless
the generator changes.
"""

import argparse
from pathlib import Path

from meslstm.synthetic import SNAPSHOT_SEED, write_snapshot


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path,
                        default=Path(__file__).resolve().parent.parent
                        / "data" / "owid_snapshot.csv")
    parser.add_argument("--seed", type=int, default=SNAPSHOT_SEED)
    args = parser.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_snapshot(args.out, seed=args.seed)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
