"""Linearized decay rates lambda_1[L + p b u_p^(p-1)] - a of the logistic flow near u_p.

These set how fast v_p(t) approaches u_p, which decides what horizon T is needed
for a given large-time tolerance.
"""

import argparse
import math

from fraclog.core import b_field, build_grid, canonical_problem
from fraclog.elliptic import solve_logistic
from fraclog.fracop import assemble_operator
from fraclog.spectral import principal_eigen


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--ps", default="2,3,8,64")
    args = ap.parse_args()
    problem = canonical_problem()
    op = assemble_operator(build_grid(problem, args.n), problem.alpha)
    b = b_field(op.grid, problem)
    print("p,max_u,rate,time_to_1e-3_from_1")
    for p in (float(v) for v in args.ps.split(",")):
        u = solve_logistic(problem, op, p=p).u
        rate = principal_eigen(op, p * b * u ** (p - 1)).lam - problem.a
        print(f"{p:g},{u.max():.6g},{rate:.6g},{math.log(1e3) / rate:.3g}")


if __name__ == "__main__":
    main()
