"""Optimal pi/2 and pi waveforms plus the magnetization they produce.

Writes, per target, ``{target}_shape.csv`` with columns
t, omega, theta, a, mx, my, mz, m_rel. The Cartesian columns come from an
independent Bloch simulation started at the north pole.
"""

import argparse
from pathlib import Path

import numpy as np

from relaxo import export
from relaxo.bloch import Magnetization, PulseParams, PulseTarget
from relaxo.trajectory import integrate_optimal, simulate_cartesian, waveform_from_trajectory

COLUMNS = ("t", "omega", "theta", "a", "mx", "my", "mz", "m_rel")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r", type=float, default=0.6)
    ap.add_argument("--R", type=float, default=1.0)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--dt-out", type=float, default=0.01)
    ap.add_argument("--out", default="results/pulse_shapes")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = PulseParams(R=args.R, r=args.r, eps=args.eps)
    for target in PulseTarget:
        traj = integrate_optimal(target, params)
        wave = waveform_from_trajectory(traj, args.dt_out)
        run = simulate_cartesian(wave, Magnetization(0.0, 0.0, 1.0), params.R)
        theta = np.interp(wave.times, traj.t, traj.theta)
        a = np.interp(wave.times, traj.t, traj.a)
        rows = zip(wave.times, wave.omega, theta, a, run.m[:, 0], run.m[:, 1], run.m[:, 2], run.magnitude)
        path = export.write_csv(out / f"{target.value}_shape.csv", COLUMNS, rows)
        print(f"{target.value}: T={traj.duration:.6f} peak omega={wave.omega.max():.6f} "
              f"final |M|={run.final_ratio:.6f} theta={run.final_theta:.6f} -> {path}")


if __name__ == "__main__":
    main()
