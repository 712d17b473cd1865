"""Command-line front end: verification suites and artifact export.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 I/O error.
Reports are deterministic for a fixed configuration (no timings, sorted keys).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import SeifertError

SUITES = ("profiles", "diophantine", "denjoy", "vpfields", "wilson", "pl", "bordism")
ARTIFACTS = ("contours", "trajectory", "denjoy_orbit", "calibration")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    suite: str = "all"
    seed: int = 0
    grid: str = "100x50x20"  # n_theta x n_z x n_phi for the inequality sweep
    tol: float = 1e-6
    out: str = "plugctl_out"
    cv: Optional[float] = None  # override the calibrated constant
    format: str = "json"

    def grid_spec(self):
        from .denjoyvp import GridSpec

        try:
            nt, nz, nph = (int(v) for v in self.grid.lower().split("x"))
        except ValueError as exc:
            raise UsageError(f"--grid expects NxMxK, got {self.grid!r}") from exc
        return GridSpec(nt, nz, nph)

    def validate(self):
        if self.suite not in SUITES + ("all",):
            raise UsageError(f"unknown suite {self.suite!r}")
        if self.format not in ("csv", "json", "svg"):
            raise UsageError(f"unknown format {self.format!r}")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        self.grid_spec()
        return self


@dataclass
class Check:
    name: str
    passed: bool
    value: object = None
    detail: dict = None

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "value": _jsonable(self.value),
                "detail": _jsonable(self.detail or {})}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (str, int, bool)) or x is None:
        return x
    return str(x)


# -- suites ------------------------------------------------------------------------------


def suite_profiles(cfg: SuiteConfig) -> list:
    from scipy.integrate import quad

    from . import smoothkit as sk

    x = np.linspace(0.0, 1.0, 100_001)
    b, B = sk.bump_b(x), sk.bump_B(x)
    integral = quad(sk.bump_b, 1 / 3, 2 / 3, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    inner = (x > 0) & (x < 1)
    return [
        Check("integral_b", abs(integral - 1) <= 1e-10, integral),
        Check("sup_b_le_4", float(b.max()) <= 4, float(b.max())),
        Check("B_gt_b", bool(np.all(B[inner] > b[inner])), float((B - b)[inner].min())),
        Check("e_boundary", sk.transition_e(0.0) == 1 and sk.transition_e(1 / 3) == 1
              and sk.transition_e(2 / 3) == 0 and sk.transition_e(1.0) == 0),
        Check("o_boundary", sk.odd_o(1.0) == 1 and sk.odd_o(-1.0) == -1 and sk.odd_o(0.0) == 0),
    ]


def suite_diophantine(cfg: SuiteConfig) -> list:
    from . import goldendio as gd

    sides, held = [], True
    for n in range(1, 41):
        r = gd.fib_distance_check(n)
        held &= r.holds
        sides.append(r.side)
    alternating = all(sides[i] != sides[i + 1] for i in range(len(sides) - 1))
    opt_ns = [n for n in range(1, 40) if gd.fibonacci(n) <= 10**5]
    opt = [n for n in opt_ns if not gd.fib_optimal_check(n)]
    return [
        Check("fib_distance_n_le_40", held, 40),
        Check("fib_distance_alternates", alternating, "".join(s[0] for s in sides)),
        Check("fib_optimal_F_le_1e5", not opt, len(opt_ns), {"failures": opt}),
    ]


def suite_denjoy(cfg: SuiteConfig) -> list:
    from . import denjoyvp as dj

    worst = 0.0
    for n in range(-50, 51):
        val, target = dj.derivative_integral(n)
        worst = max(worst, abs(val - target))
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.random(1000)
    rho, err = dj.rotation_number(dj.denjoy_map, seeds[:100], 10_000)
    md, per = dj.min_return_distance(dj.denjoy_map, seeds, 100)
    return [
        Check("image_length_n_le_50", worst <= 1e-10, worst),
        Check("rotation_number", abs(rho - (dj.TAU - 1)) <= 1e-3, rho, {"error_estimate": err}),
        Check("no_periodic_orbit_tol_1e-4", md > 1e-4, md, {"period": per}),
    ]


def suite_vpfields(cfg: SuiteConfig) -> list:
    from . import denjoyvp as dj

    grid = cfg.grid_spec()
    checks = []
    if cfg.cv is None:
        cal = dj.calibrate_C(grid)
        cv = cal.C_v
        checks.append(Check("calibration", True, cv, {"C_min": cal.C_min, "witness": cal.witness}))
    else:
        cv = cfg.cv
    rep = dj.verify_property_iv(dj.VPFieldParams(C_v=cv), grid)
    checks.append(Check("vz_exceeds_abs_hz", rep.passed, rep.min_margin,
                        {"C_v": cv, "witness": rep.witness, "n_fail": rep.n_fail, "n_points": rep.n_points}))
    return checks


def suite_wilson(cfg: SuiteConfig) -> list:
    from . import bordism as bd
    from . import wilsonplugs as wp

    W = wp.plug_W(n_samples=200, seed=cfg.seed)
    rep = bd.matched_ends_check(W.record, tol=cfg.tol)
    semi = wp.semi_plug_Ws_record(n_samples=50, seed=cfg.seed)
    ws_orbits = wp.closed_orbits_Ws()
    P = wp.plug_P(n_samples=50, seed=cfg.seed)
    wd = wp.winding_difference()
    bi = wp.bump_integral()
    return [
        Check("Ws_one_closed_orbit", len(ws_orbits) == 1, len(ws_orbits),
              {"points": [o.point for o in ws_orbits]}),
        Check("W_two_closed_orbits", len(W.closed) == 2, len(W.closed)),
        Check("W_matched_ends", rep.passed, rep.max_mismatch),
        Check("W_is_plug", bd.classify(W.record) is bd.PlugClass.plug, bd.classify(W.record).value),
        Check("Ws_is_semi_plug", bd.classify(semi) is bd.PlugClass.semi_plug, bd.classify(semi).value),
        Check("P_winding_difference", abs(wd - 2 * math.pi) <= 1e-3, wd),
        Check("bump_integral", abs(bi - 2 * math.pi) <= 1e-10, bi),
        Check("P_twist", str(P.record.twist) == "integral_dehn(1)", str(P.record.twist)),
    ]


def suite_pl(cfg: SuiteConfig) -> list:
    from . import plfoliate as pl

    f, g1, g2 = pl.build_trapezoid_f(), pl.build_g1(), pl.build_g2()
    S1, S2 = pl.SlantedSuspension(g1, 1), pl.SlantedSuspension(g2, 1)
    fp = S1.fixed_points()
    checks = [
        Check("f_area_preserving", pl.check_area_preserving(f)),
        Check("g1_area_preserving", pl.check_area_preserving(g1)),
        Check("g2_area_preserving", pl.check_area_preserving(g2)),
        Check("S1_unique_fixed_point", len(fp) == 1, [p.to_json() for p in fp]),
        Check("dehn_twist_S1_S2", pl.dehn_twist_count(S1, S2) == 1, pl.dehn_twist_count(S1, S2)),
    ]
    rng = np.random.default_rng(cfg.seed)
    bad = 0
    for _ in range(20):
        m1, m2 = random_measure_pair(rng, int(rng.integers(2, 40)))
        plan = pl.moser_plan(m1, m2)
        final, low = pl.replay_plan(m1, plan)
        bad += int(final != m2.measure or low <= 0)
    checks.append(Check("moser_random_instances", bad == 0, 20, {"failures": bad}))
    return checks


def random_measure_pair(rng: np.random.Generator, n: int):
    """Random connected graph on n nodes and two positive rational measures with equal totals."""
    from .plfoliate import SimplicialMeasure

    adj = {i: set() for i in range(n)}
    for i in range(1, n):
        j = int(rng.integers(0, i))
        adj[i].add(j)
        adj[j].add(i)
    for _ in range(n // 2):
        i, j = (int(v) for v in rng.integers(0, n, 2))
        if i != j:
            adj[i].add(j)
            adj[j].add(i)
    m1 = {i: Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 12))) for i in range(n)}
    raw = {i: Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 12))) for i in range(n)}
    scale = sum(m1.values()) / sum(raw.values())
    m2 = {i: v * scale for i, v in raw.items()}
    return SimplicialMeasure(adj, m1), SimplicialMeasure(adj, m2)


def suite_bordism(cfg: SuiteConfig) -> list:
    from . import wilsonplugs as wp

    out = []
    for k in (1, 3):
        led = wp.assembly_ledger(k)
        out.append(Check(f"T3_plus_{k}D_plus_W", led.final_count == 2 and led.all_broken,
                         led.final_count, {"all_broken": led.all_broken, "operations": led.entries}))
    D, _ = wp.plug_D_ledger()
    out.append(Check("D_two_closed_leaves", D.closed_leaf_count == 2, D.closed_leaf_count,
                     {"twist": str(D.twist)}))
    return out


_SUITE_FNS: dict[str, Callable] = {
    "profiles": suite_profiles,
    "diophantine": suite_diophantine,
    "denjoy": suite_denjoy,
    "vpfields": suite_vpfields,
    "wilson": suite_wilson,
    "pl": suite_pl,
    "bordism": suite_bordism,
}


def build_report(cfg: SuiteConfig) -> dict:
    cfg.validate()
    names = SUITES if cfg.suite == "all" else (cfg.suite,)
    suites = {}
    for name in names:
        checks = [c.to_dict() for c in _SUITE_FNS[name](cfg)]
        suites[name] = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    return {"tool": "plugctl", "version": __version__, "config": asdict(cfg),
            "suites": suites, "passed": all(s["passed"] for s in suites.values())}


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise IOError(str(exc)) from exc


def run_suite(cfg: SuiteConfig) -> tuple[int, dict]:
    """Run the configured suite(s); writes ``report_<suite>.json`` under ``cfg.out``."""
    try:
        report = build_report(cfg)
    except UsageError:
        return EXIT_USAGE, {}
    try:
        _write(Path(cfg.out) / f"report_{cfg.suite}.json", report_json(report))
    except IOError:
        return EXIT_IO, report
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


# -- artifacts --------------------------------------------------------------------------------


def emit_artifacts(kind: str, cfg: SuiteConfig, params: Optional[dict] = None) -> tuple[int, list]:
    """Write artifact files of the given kind; returns (exit code, paths)."""
    params = params or {}
    out = Path(cfg.out)
    if kind not in _ARTIFACT_FNS:
        return EXIT_USAGE, []
    try:
        files = _ARTIFACT_FNS[kind](cfg, params)
    except (SeifertError, ValueError, TypeError) as exc:
        print(f"plugctl: {exc}", file=sys.stderr)
        return EXIT_USAGE, []
    paths = []
    try:
        for name, text in files:
            _write(out / name, text)
            paths.append(str(out / name))
    except IOError:
        return EXIT_IO, paths
    return EXIT_OK, paths


def _art_contours(cfg, params):
    from . import wilsonplugs as wp

    cont = wp.contours_f(n=int(params.get("n", 401)))
    if cfg.format == "svg":
        return [("contours_f.svg", wp.contours_svg(cont))]
    if cfg.format == "json":
        data = {str(k): [np.asarray(line).tolist() for line in v] for k, v in cont.items()}
        return [("contours_f.json", json.dumps(data, sort_keys=True) + "\n")]
    return [("contours_f.csv", wp.contours_csv(cont))]


def _art_trajectory(cfg, params):
    from .flowcore import integrate
    from .wilsonplugs import field_Ws

    x0 = params.get("x0", (1.5, 0.0, -1.0))
    tr = integrate(field_Ws(), x0, float(params.get("t_max", 200.0)), tol=float(params.get("tol", 1e-10)),
                   detect_closed=False)
    if cfg.format == "json":
        data = {"exit_code": tr.exit_code, "t": tr.times.tolist(), "points": tr.points.tolist()}
        return [("trajectory_Ws.json", json.dumps(data, sort_keys=True) + "\n")]
    return [("trajectory_Ws.csv", tr.to_csv(names=("r", "theta", "z")))]


def _art_denjoy_orbit(cfg, params):
    from . import denjoyvp as dj

    n_iter = int(params.get("iterations", 10_000))
    x = float(params.get("x0", np.random.default_rng(cfg.seed).random()))
    rho, err = dj.rotation_number(dj.denjoy_map, np.array([x]), n_iter)
    orbit = [x]
    for _ in range(min(n_iter, 1000) - 1):
        orbit.append(float(dj.denjoy_map(orbit[-1])[0]))
    data = {"x0": x, "iterations": n_iter, "rotation_estimate": rho, "error_estimate": err,
            "target": dj.TAU - 1, "orbit_head": orbit}
    return [("denjoy_orbit.json", json.dumps(data, sort_keys=True) + "\n")]


def _art_calibration(cfg, params):
    from . import denjoyvp as dj

    cal = dj.calibrate_C(cfg.grid_spec(), check_stability=bool(params.get("stability", True)))
    return [("calibration.json", json.dumps(json.loads(cal.to_json()), sort_keys=True, indent=2) + "\n")]


_ARTIFACT_FNS = {
    "contours": _art_contours,
    "trajectory": _art_trajectory,
    "denjoy_orbit": _art_denjoy_orbit,
    "calibration": _art_calibration,
}


# -- argument handling ------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plugctl", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file with SuiteConfig fields; flags override it")
    ap.add_argument("--suite", choices=SUITES + ("all",))
    ap.add_argument("--emit", choices=ARTIFACTS, help="write an artifact instead of running a suite")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--grid", help="inequality sweep grid n_theta x n_z x n_phi, e.g. 100x50x20")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--out")
    ap.add_argument("--cv", type=float, help="override the calibrated constant C_v")
    ap.add_argument("--format", choices=("csv", "json", "svg"))
    return ap


def config_from_args(ns: argparse.Namespace) -> SuiteConfig:
    cfg = SuiteConfig()
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IOError(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad config file: {exc}") from exc
        known = {f.name for f in fields(SuiteConfig)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        cfg = replace(cfg, **data)
    over = {k: getattr(ns, k) for k in ("suite", "seed", "grid", "tol", "out", "cv", "format")
            if getattr(ns, k) is not None}
    return replace(cfg, **over).validate()


def main(argv=None) -> int:
    ap = _parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = config_from_args(ns)
    except UsageError as exc:
        print(f"plugctl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IOError as exc:
        print(f"plugctl: {exc}", file=sys.stderr)
        return EXIT_IO
    if ns.emit:
        code, paths = emit_artifacts(ns.emit, cfg)
        for p in paths:
            print(p)
        return code
    code, report = run_suite(cfg)
    for name, s in report.get("suites", {}).items():
        for c in s["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}.{c['name']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
