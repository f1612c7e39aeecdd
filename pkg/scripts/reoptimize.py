"""Re-run the N=4 symmetric fit and compare with the published parameters."""

import argparse
import json
import time

from mrqm.optimizer import OptimizationProblem, optimize, verify_against_paper


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--starts", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--kind", choices=["one_minus_F", "reflection_S"], default="one_minus_F")
    args = ap.parse_args()
    problem = OptimizationProblem(objective_kind=args.kind)
    t0 = time.perf_counter()
    result = optimize(problem, n_starts=args.starts, seed=args.seed, jobs=args.jobs)
    print(f"{args.starts} starts in {time.perf_counter() - t0:.1f} s, "
          f"{result.n_converged} converged, objective {result.objective_value:.3e}")
    print(json.dumps(verify_against_paper(result), indent=2))


if __name__ == "__main__":
    main()
