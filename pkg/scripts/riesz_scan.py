"""Empirical Riesz constants of latitudinal families against the envelope."""
import argparse

import numpy as np

from projop.aww1d import riesz_envelope
from projop.geometry import build_flow_grid, sphere, sphere_morse
from projop.latitudinal import latitudinal_family, level_grid
from projop.verify import check_family


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", nargs="+", type=float, default=[1, 1.5, 2, 3, 4])
    ap.add_argument("--probes", type=int, default=256)
    args = ap.parse_args()
    S, M = sphere(), sphere_morse()
    lg = level_grid(0.0, 2.0, (0.05, 0.5, 1.1, 1.7, 1.95), 0.02, 128)
    fg = build_flow_grid(S, M, lg.levels, lg.dt, 256)
    g = fg.quadrature()
    for p in args.p:
        rep = check_family(latitudinal_family(fg, lg, p), g, riesz_probes=args.probes)
        a, b = riesz_envelope(p)
        print(f"p={p:<5g} measured [{rep.riesz[0]:.5f}, {rep.riesz[1]:.5f}]  envelope [{a:.5f}, {b:.5f}]")


if __name__ == "__main__":
    main()
