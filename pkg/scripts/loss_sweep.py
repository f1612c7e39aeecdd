"""Plateau minimum versus common-resonator and miniresonator losses separately."""

import argparse

import numpy as np

from mrqm.model import paper_config, plateau_min_eta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=9)
    ap.add_argument("--max", type=float, default=0.1)
    args = ap.parse_args()
    base = paper_config()
    print(f"{'gamma':>8} {'both':>10} {'common only':>12} {'minis only':>11}")
    for gamma in np.linspace(0, args.max, args.points):
        both = plateau_min_eta(base.with_losses(gamma, gamma))
        common = plateau_min_eta(base.with_losses(gamma, 0.0))
        minis = plateau_min_eta(base.with_losses(0.0, gamma))
        print(f"{gamma:8.4f} {both:10.6f} {common:12.6f} {minis:11.6f}")


if __name__ == "__main__":
    main()
