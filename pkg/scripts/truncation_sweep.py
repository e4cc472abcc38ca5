"""lambda_A and the solution energies as the truncation radius grows.

With A = 1 the eigenvalue estimate tracks (pi / R)^2 down to zero, the
discrete sign that a constant weight violates the decay hypothesis.  With a
Gaussian A it decreases slowly towards a positive limit.
"""
import argparse

import numpy as np

from nodal_nehari import (Functional, PowerNonlinearity, ProblemSpec, SolverConfig, WeightField,
                          build_domain, minimize_rayleigh, solve_all)
from nodal_nehari.domain import tail_mass


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radii", type=float, nargs="+", default=[5.0, 10.0, 20.0, 40.0])
    ap.add_argument("--density", type=float, default=50.0, help="nodes per unit length")
    args = ap.parse_args()

    for profile in ("constant", "gaussian"):
        print(f"A = {profile}")
        spec = ProblemSpec(p=2.0, N=3, lam=-1.0, A=WeightField(profile),
                           nonlinearity=PowerNonlinearity(4.0, WeightField("gaussian")))
        for R in args.radii:
            d = build_domain("radial", N=3, R=R, n=int(args.density * R) + 1)
            F = Functional(spec, d)
            lam_A = minimize_rayleigh(F).lam_A
            u1, _, u3 = solve_all(F, SolverConfig(seed=0))
            print(f"  R={R:6.1f}  lambda_A={lam_A:.6f}  (pi/R)^2={(np.pi / R) ** 2:.6f}  "
                  f"S1={u1.S:.6f}  S3={u3.S:.6f}  tail(A)={tail_mass(d, F.A):.2e}")


if __name__ == "__main__":
    main()
