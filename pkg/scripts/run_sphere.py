"""Build and verify a sphere decomposition; print the plan and the report."""
import argparse
import time

from projop.decomposition import build_decomposition, verify_decomposition
from projop.geometry import sphere, sphere_morse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.8)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--levels", type=int, default=128)
    ap.add_argument("--traj", type=int, default=256)
    ap.add_argument("--riesz-probes", type=int, default=256)
    args = ap.parse_args()
    t0 = time.perf_counter()
    dec = build_decomposition(sphere(), sphere_morse(), args.eps, p=args.p,
                              n_levels=args.levels, n_traj=args.traj)
    t1 = time.perf_counter()
    rep = verify_decomposition(dec, riesz_probes=args.riesz_probes)
    t2 = time.perf_counter()
    print("cuts", [round(c, 4) for c in dec.plan.cuts], "delta", round(dec.plan.delta, 5))
    print("operators", len(dec.family), "critical-patch", dec.family.count("critical-patch"))
    for c in rep.checks:
        print(f"  {c['name']:<24} {c['value']:.3e}  tol {c['tol']:.1e}  {'ok' if c['passed'] else 'FAIL'}")
    print(f"riesz {rep.riesz}  overlap {rep.overlap}  build {t1 - t0:.1f}s  verify {t2 - t1:.1f}s")


if __name__ == "__main__":
    main()
