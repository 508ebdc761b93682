"""Classical-limit scan: distance of Pauli and QA runs to the hbar -> 0 solution.

    python scripts/hbar_scan.py --out runs/hbar_scan
"""

import argparse
from pathlib import Path

from spinflow.diagnostics import free_packet_scenario, hbar_scan, precession_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/hbar_scan")
    ap.add_argument("--hbars", default="1,0.5,0.25,0.125")
    ap.add_argument("--solvers", default="pauli,qa")
    ap.add_argument("--t-final", type=float, default=1.0)
    args = ap.parse_args()
    hbars = tuple(float(h) for h in args.hbars.split(","))
    solvers = tuple(s.strip() for s in args.solvers.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for make in (free_packet_scenario, precession_scenario):
        sc = make(t_final=args.t_final)
        rep = hbar_scan(sc, hbars, solvers=solvers)
        rep.write_csv(out / f"{sc.name}.csv")
        print(f"{sc.name}: spin rotation {rep.spin_rotation:.6f} (expected {rep.expected_rotation:.6f})")
        for solver in solvers:
            errs = ", ".join(f"{h:g}: {e:.3e}" for h, e in sorted(rep.errors(solver), reverse=True))
            flat = max(e for _, e in rep.errors(solver)) < 1e-9
            trend = "at round-off" if flat else f"monotone={rep.monotone(solver)}"
            print(f"  {solver:6s} {trend}  {errs}")
        for e in rep.entries:
            if e.censored:
                print(f"  {e.solver} hbar={e.hbar:g} halted: {e.note}")


if __name__ == "__main__":
    main()
