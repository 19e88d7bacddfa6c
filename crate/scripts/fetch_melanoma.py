#!/usr/bin/env python3
"""Fetch the Andersen et al. malignant melanoma data (205 patients, as
shipped in R's MASS::Melanoma) and convert it to the dnbcure CSV layout.

Output columns: time (years), status (1 = death from melanoma, 0 otherwise),
ulcer (1 present, 0 absent), thickness (mm).

Requires the `rdatasets` package (`pip install rdatasets`), which bundles a
copy of the R datasets; no R installation is needed.
"""

import argparse
import csv
import pathlib
import sys

DAYS_PER_YEAR = 365.25


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/melanoma.csv")
    args = parser.parse_args()

    try:
        import rdatasets
    except ImportError:
        print("install the 'rdatasets' package first: pip install rdatasets", file=sys.stderr)
        return 1

    frame = rdatasets.data("MASS", "Melanoma")
    if len(frame) != 205:
        print(f"expected 205 rows, found {len(frame)}", file=sys.stderr)
        return 1

    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "status", "ulcer", "thickness"])
        for row in frame.itertuples(index=False):
            writer.writerow([
                repr(row.time / DAYS_PER_YEAR),
                1 if row.status == 1 else 0,
                int(row.ulcer),
                repr(float(row.thickness)),
            ])
    print(f"wrote {len(frame)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
