"""Export level sets of the Wilson function f(r, z) as SVG and CSV."""
import argparse
from pathlib import Path

from seifertvp import wilsonplugs as wp


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="contours", help="output directory")
    ap.add_argument("-n", type=int, default=401, help="grid points per axis")
    ap.add_argument("--levels", type=float, nargs="*", help="contour levels (default: the library set)")
    args = ap.parse_args(argv)
    levels = tuple(args.levels) if args.levels else wp.CONTOUR_LEVELS
    cont = wp.contours_f(levels, n=args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "contours_f.svg").write_text(wp.contours_svg(cont), encoding="utf-8")
    (out / "contours_f.csv").write_text(wp.contours_csv(cont), encoding="utf-8", newline="")
    for lvl, segs in sorted(cont.items()):
        print(f"level {lvl:+.3f}: {len(segs)} polyline(s)")


if __name__ == "__main__":
    main()
