"""Empirical check of the Gaussian error limit for the weighted chi-square test.

For each target detection value u, tunes the radius of a mild problem
(polynomial smoothness and noise growth, exponents 1) so the solved value
hits u, runs the Monte Carlo at the least-favorable point, and writes a CSV
comparing empirical type I / type II rates with Phi-based predictions.

    python scripts/gaussian_sharpness.py --out gaussian_sharpness.csv
"""

import argparse
import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from seqdetect import (ProblemSpec, SequenceFamily, build_weighted,
                       estimate_errors, solve_extreme)
from seqdetect.numutil import norm_cdf, norm_quantile


def tuned_spec(u_target: float, eps: float, K: int = 65536) -> ProblemSpec:
    fam = SequenceFamily("polynomial", exponent=1.0)
    lo, hi = math.log(1e-5), math.log(5e-2)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        spec = ProblemSpec(a=fam, sigma=fam, q=2.0, r=math.exp(mid),
                           eps=eps, K=K)
        if solve_extreme(spec).u < u_target:
            lo = mid
        else:
            hi = mid
    return ProblemSpec(a=fam, sigma=fam, q=2.0, r=math.exp(0.5 * (lo + hi)),
                       eps=eps, K=K)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="gaussian_sharpness.csv")
    parser.add_argument("--reps", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--threads", type=int, default=2)
    parser.add_argument("--alpha", type=float, default=0.05)
    args = parser.parse_args()

    rows = ["u,m,eps,r,alpha_hat,beta_hat,beta_theory,gamma_hat,gamma_theory"]
    for u_target, eps in ((1.0, 1e-8), (2.0, 1e-9), (3.0, 3e-10)):
        spec = tuned_spec(u_target, eps)
        sol = solve_extreme(spec)
        rule = build_weighted(sol, alpha=args.alpha)
        rep = estimate_errors(rule, sol.least_favorable(sol.m), spec.eps,
                              args.reps, args.seed, threads=args.threads,
                              theory_u=sol.u, theory_alpha=args.alpha)
        beta_t = float(norm_cdf(norm_quantile(1 - args.alpha) - sol.u))
        gamma_t = float(2.0 * norm_cdf(-sol.u / 2.0))
        rows.append(f"{sol.u:.6f},{sol.m},{eps:.3g},{spec.r:.6e},"
                    f"{rep.alpha_hat:.6f},{rep.beta_hat:.6f},{beta_t:.6f},"
                    f"{rep.gamma_hat:.6f},{gamma_t:.6f}")
        print(rows[-1])
    Path(args.out).write_text("\n".join(rows) + "\n")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
