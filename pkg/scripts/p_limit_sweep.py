"""Elliptic p-limit at several resolutions, with the O(1/p) extrapolation.

For each n, prints ||u_p - u||_inf for the given p values and the distance of
the extrapolated field 2 u_p - u_{p/2} at the largest p.
"""

import argparse

from fraclog.core import build_grid, canonical_problem
from fraclog.elliptic import solve_logistic, solve_obstacle_elliptic
from fraclog.fracop import assemble_operator
from fraclog.harness import sup_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", default="256,512,1024")
    ap.add_argument("--ps", default="4,8,16,32,64,128")
    args = ap.parse_args()
    problem = canonical_problem()
    ps = [float(v) for v in args.ps.split(",")]
    for n in (int(v) for v in args.ns.split(",")):
        op = assemble_operator(build_grid(problem, n), problem.alpha)
        u = solve_obstacle_elliptic(problem, op).u
        fields = {p: solve_logistic(problem, op, p=p).u for p in ps}
        dists = [sup_distance(fields[p], u) for p in ps]
        line = " ".join(f"p={p:g}:{d:.4f}" for p, d in zip(ps, dists))
        extra = ""
        if len(ps) > 1 and ps[-1] == 2 * ps[-2]:
            extra = f" extrapolated:{sup_distance(2 * fields[ps[-1]] - fields[ps[-2]], u):.4f}"
        print(f"n={n} {line}{extra}")


if __name__ == "__main__":
    main()
