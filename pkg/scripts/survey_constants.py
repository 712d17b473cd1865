"""Empirical surveys for the Diophantine constants.

Runs the gap-ratio survey, the 3-5-2 sum-ratio survey over random arcs that
avoid 0, and the find_between ratio over all pairs |n1|, |n2| <= M.  Prints one
JSON calibration report per constant.
"""
import argparse
import json
import random

from seifertvp import goldendio as gd
from seifertvp.errors import InsufficientDataError


def random_arcs(rng, count, span, avoid_zero=False):
    arcs = []
    while len(arcs) < count:
        n1, n2 = rng.sample(range(-span, span + 1), 2)
        arc = gd.Arc(gd.mod_tau(n1), gd.mod_tau(n2))
        if avoid_zero and arc.contains(0):
            continue
        arcs.append((n1, n2, arc))
    return arcs


def gap_survey(rng, count, N):
    arcs = random_arcs(rng, count, 50)
    survey = gd.gap_ratio_survey([a for _, _, a in arcs], N, skip_insufficient=True)
    return survey.report(N)


def sum_survey(rng, count, N):
    best, wit = 0.0, None
    for n1, n2, arc in random_arcs(rng, count, 50, avoid_zero=True):
        try:
            sr = gd.sum_ratio_352(arc.start, arc.end, N)
        except InsufficientDataError:
            continue
        if sr.ratio > best:
            best, wit = sr.ratio, {"n1": n1, "n2": n2, "count": sr.count}
    return gd.CalibrationReport("sum_ratio_352", best, f"{count} arcs avoiding 0, N={N}", wit)


def between_survey(M):
    best, wit = 0.0, None
    for n1 in range(-M, M + 1):
        for n2 in range(-M, M + 1):
            if n1 == n2:
                continue
            n3, ratio = gd.find_between(n1, n2)
            if ratio > best:
                best, wit = ratio, {"n1": n1, "n2": n2, "n3": n3}
    return gd.CalibrationReport("find_between", best, f"all pairs |n1|, |n2| <= {M}", wit)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--arcs", type=int, default=100)
    ap.add_argument("-N", type=int, default=10**5, help="search window [-N, N]")
    ap.add_argument("--pairs", type=int, default=60, help="bound M for the find_between survey")
    args = ap.parse_args(argv)
    rng = random.Random(args.seed)
    for rep in (gap_survey(rng, args.arcs, args.N), sum_survey(rng, args.arcs, args.N),
                between_survey(args.pairs)):
        print(json.dumps(json.loads(rep.to_json()), sort_keys=True))


if __name__ == "__main__":
    main()
