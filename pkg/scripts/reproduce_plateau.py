"""Efficiency plateau of the published N=4 device at several loss levels."""

import argparse

from mrqm.model import efficiency, paper_config, plateau_bandwidth, plateau_min_eta, spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gammas", default="0,1e-3,1e-2,1e-1", help="comma-separated loss levels")
    args = ap.parse_args()
    print(f"{'gamma':>8} {'min eta':>12} {'0.999 band':>22} {'0.9999 band':>22}")
    for gamma in (float(v) for v in args.gammas.split(",")):
        cfg = paper_config(gamma)
        curve = efficiency(spectrum(cfg))
        bands = []
        for thr in (0.999, 0.9999):
            iv = plateau_bandwidth(curve, thr)
            bands.append("none" if iv is None else f"[{iv[0]:+.4f}, {iv[1]:+.4f}]")
        print(f"{gamma:8.0e} {plateau_min_eta(cfg):12.7f} {bands[0]:>22} {bands[1]:>22}")


if __name__ == "__main__":
    main()
