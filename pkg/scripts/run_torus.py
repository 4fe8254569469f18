"""Build and verify the torus decomposition with its four critical patches."""
import argparse
import time

from projop.decomposition import build_decomposition, verify_decomposition
from projop.geometry import torus, torus_morse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--levels", type=int, default=384)
    ap.add_argument("--traj", type=int, default=512)
    ap.add_argument("--riesz-probes", type=int, default=64)
    args = ap.parse_args()
    t0 = time.perf_counter()
    dec = build_decomposition(torus(), torus_morse(), args.eps, p=args.p,
                              n_levels=args.levels, n_traj=args.traj)
    t1 = time.perf_counter()
    rep = verify_decomposition(dec, riesz_probes=args.riesz_probes)
    t2 = time.perf_counter()
    for b in dec.plan.brackets:
        extra = "" if b.zone is None else f" r={b.zone.r:.4f} delta_z={b.zone.delta_z:.5f}"
        print(f"{b.kind:<7} value={b.value:.3f} cuts={[round(c, 5) for c in b.cuts]}{extra}")
    print("operators", len(dec.family), "critical-patch", dec.family.count("critical-patch"))
    for pd in dec.info["patch_distance"]:
        print(f"  {pd['name']}: max distance {pd['max_distance']:.3f} < U radius {pd['U_radius']:.3f}")
    for c in rep.checks:
        print(f"  {c['name']:<24} {c['value']:.3e}  tol {c['tol']:.1e}  {'ok' if c['passed'] else 'FAIL'}")
    print(f"riesz {rep.riesz}  overlap {rep.overlap}  build {t1 - t0:.1f}s  verify {t2 - t1:.1f}s")


if __name__ == "__main__":
    main()
