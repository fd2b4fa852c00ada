"""Keypoint counts on the synthetic poster image over a grid of detector thresholds.

Used to pick the package defaults: aim for a few hundred to a few thousand
keypoints at 800x600. Run: python3 scripts/calibrate_thresholds.py
"""

import argparse

from hhfreak.detector import DetectorConfig, cull_keypoints, detect
from hhfreak.raster import to_grey
from hhfreak.synthetic import poster_image


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--corner", default="1e-6,1e-5,1e-4", help="corner thresholds to try")
    p.add_argument("--hessian", default="1e-4,3e-4,1e-3,3e-3,1e-2", help="Hessian thresholds T to try")
    args = p.parse_args()

    grey = to_grey(poster_image())
    hess = [float(v) for v in args.hessian.split(",")]
    print("corner_threshold  sigma_c  " + "  ".join(f"T={t:<8g}" for t in hess))
    for c in (float(v) for v in args.corner.split(",")):
        # sigma_c depends only on the corner threshold, so T is applied to one scale space
        res = detect(grey, DetectorConfig(corner_threshold=c))
        counts = [len(cull_keypoints(res.space, t)) for t in hess]
        print(f"{c:<16g}  {res.characteristic_sigma:<7g}  " + "  ".join(f"{n:<10d}" for n in counts))


if __name__ == "__main__":
    main()
