"""Print B_p and the Riesz envelope for a range of exponents."""
import argparse

import numpy as np

from projop.aww1d import Bp, riesz_envelope


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", nargs="+", type=float, default=[1, 1.25, 1.5, 2, 3, 4, 8, np.inf])
    args = ap.parse_args()
    print(f"{'p':>6} {'B_p':>16} {'lower':>10} {'upper':>10}")
    for p in args.p:
        lo, hi = riesz_envelope(p)
        print(f"{p:>6g} {Bp(p):>16.12f} {lo:>10.6f} {hi:>10.6f}")


if __name__ == "__main__":
    main()
