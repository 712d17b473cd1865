"""Calibrate the constant C_v of the vertical field and check it on the sweep grid.

    python3 scripts/calibrate_cv.py --grid 100x50x20 --out calibration.json
"""
import argparse
import json
import sys

from seifertvp import denjoyvp as dv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", default="100x50x20", help="n_theta x n_z x n_phi")
    ap.add_argument("--safety", type=float, default=2.0)
    ap.add_argument("--no-stability", action="store_true", help="skip the 2x densification check")
    ap.add_argument("--out", help="write the JSON here instead of stdout")
    args = ap.parse_args(argv)
    nt, nz, nph = (int(v) for v in args.grid.lower().split("x"))
    grid = dv.GridSpec(nt, nz, nph)
    cal = dv.calibrate_C(grid, safety=args.safety, check_stability=not args.no_stability)
    rep = dv.verify_property_iv(dv.VPFieldParams(C_v=cal.C_v), grid)
    data = {"calibration": json.loads(cal.to_json()), "verification": json.loads(rep.to_json())}
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
