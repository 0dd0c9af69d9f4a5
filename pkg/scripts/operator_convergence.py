"""Getoor-identity error of the discrete operator under grid refinement.

Writes a CSV with the error in the >= 5h band and at fixed interior points |x| <= 0.9.
"""

import argparse
import csv
import sys

import numpy as np

from fraclog.core import Grid1D, fmt
from fraclog.fracop import apply, assemble_operator


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", default="128,256,512,1024,2048")
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    rows = []
    for n in (int(v) for v in args.ns.split(",")):
        op = assemble_operator(Grid1D(-1.0, 1.0, n), 0.5)
        x = op.grid.nodes
        err = np.abs(apply(op, np.sqrt(1 - x**2)) - 1.0)
        rows.append((n, err[1 - np.abs(x) >= 5 * op.h].max(), err[np.abs(x) <= 0.9].max()))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "err_5h_band", "err_fixed_interior"])
    for n, a, b in rows:
        w.writerow([n, fmt(a), fmt(b)])


if __name__ == "__main__":
    main()
