"""Run the simulation study over a design grid and write one summary CSV.

Desk scale by default (500 replications, the headline design cells);
--full switches to 1000 replications over the complete
(lambda, rho, sigma_z, sigma_v, n) grid, which takes hours.
"""

import argparse
import csv
import sys
import time
from itertools import product
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from weakid.montecarlo import McDesign, SUMMARY_COLUMNS, run_design, summary_row


def desk_designs(seed: int, reps: int):
    cells = [
        dict(n=500, rho=0.5, lam=0.5),
        dict(n=500, rho=0.95, lam=0.5),
        dict(n=5000, rho=0.95, lam=0.5),
        dict(n=5000, rho=0.95, lam=0.1),
        dict(n=5000, rho=0.95, lam=0.3),
    ]
    return [McDesign(replications=reps, seed=seed, **c) for c in cells]


def full_designs(seed: int):
    lams = [0.5, 0.4, 0.3, 0.2, 0.1]
    rhos = [0.5, 0.95]
    sig_pairs = [(1, 0.2), (1, 10), (1, 1), (0.2, 1), (10, 1)]
    ns = [500, 5000, 10000]
    out = []
    for lam, rho, (sz, sv), n in product(lams, rhos, sig_pairs, ns):
        out.append(
            McDesign(
                n=n, rho=rho, lam=lam, sigma_z=sz, sigma_v=sv,
                replications=1000, seed=seed,
            )
        )
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="design_summary.csv")
    ap.add_argument("--seed", type=int, default=20240501)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()

    designs = full_designs(args.seed) if args.full else desk_designs(args.seed, args.reps)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for k, design in enumerate(designs, 1):
            t0 = time.time()
            summary = run_design(design, workers=args.workers)
            writer.writerow(summary_row(summary))
            fh.flush()
            print(
                f"[{k}/{len(designs)}] n={design.n} rho={design.rho} "
                f"lam={design.lam} sz={design.sigma_z} sv={design.sigma_v} "
                f"dj={summary.reject_rates['dj']:.3f} ss={summary.reject_rates['ss']:.3f} "
                f"rrmse={summary.rrmse:.3f} failed={summary.failed_replications} "
                f"({time.time()-t0:.1f}s)"
            )
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
