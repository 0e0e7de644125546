"""Direct-optimization cross-check over r and grid size.

For every (target, r, n) the oracle is solved from the ramp start and
compared with the closed-form energy. A perturbation audit is added per
(target, r). Output: ``oracle_study.csv`` and ``audit_study.csv``.
"""

import argparse
import time
from pathlib import Path

from relaxo import export
from relaxo.bloch import PulseParams, PulseTarget
from relaxo.oracle import DirectProblem, compare_to_analytic, perturbation_audit, solve_direct
from relaxo.trajectory import integrate_optimal

ORACLE_COLUMNS = ("target", "r", "n", "converged", "outer", "inner", "energy", "energy_rel_gap", "waveform_max_dev", "seconds")
AUDIT_COLUMNS = ("target", "r", "trials", "skipped", "min_excess", "median_excess")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.3, 0.6, 0.9])
    ap.add_argument("--grids", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    oracle_rows, audit_rows = [], []
    for target in PulseTarget:
        code = 0 if target is PulseTarget.HalfPi else 1
        for r in args.ratios:
            params = PulseParams(R=1.0, r=r)
            for n in args.grids:
                t0 = time.perf_counter()
                prob = DirectProblem.at_analytic_horizon(target, params, n=n)
                res = solve_direct(prob)
                cmp = compare_to_analytic(res, prob)
                dt = time.perf_counter() - t0
                oracle_rows.append((code, r, n, int(res.converged), res.iterations, res.inner_iterations,
                                    res.energy, cmp["energy_rel_gap"], cmp["waveform_max_dev"], dt))
                print(f"{target.value} r={r} n={n}: converged={res.converged} gap={cmp['energy_rel_gap']:.2e} "
                      f"dev={cmp['waveform_max_dev']:.2e} ({dt:.1f}s)")
            rep = perturbation_audit(integrate_optimal(target, params), n_trials=args.trials)
            audit_rows.append((code, r, rep.n_trials, rep.n_skipped, rep.min_excess, rep.median_excess))
            print(f"{target.value} r={r} audit: min excess {rep.min_excess:.2e}")
    # target column: 0 = pi/2, 1 = pi
    print(export.write_csv(out / "oracle_study.csv", ORACLE_COLUMNS, oracle_rows))
    print(export.write_csv(out / "audit_study.csv", AUDIT_COLUMNS, audit_rows))


if __name__ == "__main__":
    main()
