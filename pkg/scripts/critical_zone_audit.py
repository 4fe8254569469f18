"""Audit the torus critical zones over a grid of (theta0, t) windows."""
import argparse

import numpy as np

from projop import geometry as geo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--nodes", type=int, default=2048)
    args = ap.parse_args()
    S, M = geo.torus(), geo.torus_morse()
    for cp in [c for c in M.critical if c.index == 1]:
        z = geo.critical_zone(S, M, cp, args.eps)
        print(f"saddle value={z.value:.3f} r={z.r:.4f} delta_z={z.delta_z:.5f} "
              f"V={z.V_radius:.3f} U={z.U_radius:.3f}")
        for a in (-1.0, -0.5, 0.5):
            for b in (-1.0, -0.3, 0.2, 1.0):
                r = geo.zone_audit(S, M, z, z.value + a * z.delta_z, z.value + b * z.delta_z,
                                   n_nodes=args.nodes)
                print(f"  theta0={a:+.1f}dz t={b:+.1f}dz  samples={r['n_tilde']}/{r['n_level']}  "
                      f"violations={r['separation_violations']},{r['containment_violations']},"
                      f"{r['U_violations']}")


if __name__ == "__main__":
    main()
