"""Monte Carlo runs: efficiency / Type I error (estimate) or selection frequencies.

    python3 scripts/run_simulation.py estimate --n 100 --reps 500
    python3 scripts/run_simulation.py structure --n 300 --reps 200
    python3 scripts/run_simulation.py variables --n 300 --reps 200
"""
import argparse
import sys
import time

from ordinal_ws.simulate import SimDesign, run_replications, structure_design, variables_design


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("task", choices=("estimate", "structure", "variables"))
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--theta", type=float, default=3.0, help="Gumbel parameter (estimate task)")
    ap.add_argument("--link", default="probit", choices=("probit", "logit"))
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", help="write the JSON summary here")
    a = ap.parse_args(argv)
    if a.task == "estimate":
        design = SimDesign(n=a.n, B=a.reps, copula_param=a.theta, link=a.link, seed=a.seed)
    elif a.task == "structure":
        design = structure_design(a.n, a.reps, seed=a.seed)
    else:
        design = variables_design(a.n, a.reps, seed=a.seed)
    t0 = time.time()
    summary = run_replications(design, threads=a.threads,
                               progress=lambda k, B: print(f"\r{k}/{B}", end="", file=sys.stderr))
    print(file=sys.stderr)
    print(summary.table())
    print(f"elapsed {time.time() - t0:.0f}s")
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(summary.to_json())


if __name__ == "__main__":
    main()
