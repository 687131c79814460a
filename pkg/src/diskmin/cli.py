"""Command-line front end: wires JSON/flag configuration to the library.

Subcommands: simulate, classify, jacobi, shoot, value-map, scan.  Every
artifact embeds the fully resolved configuration (including the complete
tolerance set), so a run is reproducible from any of its output files.
Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 structural-assumption violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
from multiprocessing import Pool
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AssumptionViolated, ConfigError, DiskminError
from .flow import propagate_extremal, stratum_of, trajectory_to_csv
from .hamiltonian import ExtremalPoint, hmax, lifts, optimal_control
from .jacobi import (
    check_theorem3,
    det_m_profile,
    profile_to_csv,
    smooth_conjugate_test,
    verdict_to_json,
)
from .shooting import shoot, tf_map_sample
from .systems import get_system
from .tolerances import DEFAULT_TOL, Tolerances

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICS = 2
EXIT_ASSUMPTION = 3

_TOL_FLAGS = {
    # flag/config key  ->  Tolerances field
    "tol_int": "tol_int",
    "tol_switch": "tol_switch_rho_rel",
    "tol_shoot": "tol_shoot_rel",
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as configuration errors and
    accepts comma vectors with a leading minus (``--p0 -1,0,-2,0``)."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r"^-\d[\d.,eE+-]*$")

    def error(self, message):
        raise ConfigError(message)


def _parse_vec(value, name: str) -> np.ndarray:
    if isinstance(value, str):
        parts = value.strip().lstrip("[").rstrip("]").split(",")
        try:
            value = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"{name}: cannot parse '{value}' as a vector")
    vec = np.asarray(value, dtype=float)
    if vec.shape != (4,):
        raise ConfigError(f"{name}: expected 4 components, got shape {vec.shape}")
    return vec


def _fmt(v) -> str:
    return f"{float(v):.17g}"


class RunConfig:
    """Layered configuration: defaults, then a JSON file, then flags."""

    def __init__(self, args: argparse.Namespace):
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"config file {args.config}: {exc}")
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        self._file = file_cfg
        self._args = vars(args)
        self.command = args.command

        overrides = {}
        for key, fieldname in _TOL_FLAGS.items():
            val = self._raw(key)
            if val is not None:
                val = float(val)
                if val <= 0.0:
                    raise ConfigError(f"--{key.replace('_', '-')} must be positive")
                overrides[fieldname] = val
        for key, val in self._file.get("tol", {}).items():
            if not hasattr(DEFAULT_TOL, key):
                raise ConfigError(f"unknown tolerance field '{key}'")
            overrides.setdefault(key, float(val))
        self.tol = DEFAULT_TOL.with_overrides(**overrides)

        self.system_name = self._raw("system")
        if not self.system_name:
            raise ConfigError("no system name given (use --system)")
        self.system = get_system(self.system_name)
        self.out_dir = Path(self._raw("out_dir") or ".")

    def _raw(self, key: str, default=None):
        val = self._args.get(key)
        if val is None:
            val = self._file.get(key)
        return default if val is None else val

    def vec(self, key: str, default=None) -> Optional[np.ndarray]:
        val = self._raw(key)
        if val is None:
            if default is None:
                return None
            return np.asarray(default, dtype=float)
        return _parse_vec(val, key)

    def num(self, key: str, default=None) -> Optional[float]:
        val = self._raw(key, default)
        return None if val is None else float(val)

    def int_(self, key: str, default=None) -> Optional[int]:
        val = self._raw(key, default)
        return None if val is None else int(val)

    def str_(self, key: str, default=None) -> Optional[str]:
        val = self._raw(key, default)
        return None if val is None else str(val)

    def require_vec(self, key: str) -> np.ndarray:
        vec = self.vec(key)
        if vec is None:
            raise ConfigError(f"missing required vector '{key}'")
        return vec

    def require_num(self, key: str) -> float:
        val = self.num(key)
        if val is None:
            raise ConfigError(f"missing required value '{key}'")
        return val

    def resolved(self) -> dict:
        """The full effective configuration, for artifact headers."""
        doc = {"command": self.command, "system": self.system_name,
               "out_dir": str(self.out_dir)}
        for key, val in sorted({**self._file, **self._args}.items()):
            if key in ("command", "config", "system", "out_dir", "tol", "func"):
                continue
            if val is None:
                continue
            if isinstance(val, np.ndarray):
                val = val.tolist()
            doc[key] = val
        doc["tolerances"] = self.tol.asdict()
        return doc

    def header_lines(self) -> tuple[str, ...]:
        return (f"config: {json.dumps(self.resolved(), sort_keys=True)}",)

    def out_path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name


def _write_json(path: Path, doc: dict, cfg: RunConfig) -> None:
    doc = dict(doc)
    doc["config"] = cfg.resolved()
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    p0 = cfg.require_vec("p0")
    t_final = cfg.num("tf")
    if t_final is None:
        t_final = cfg.require_num("horizon")
    start = ExtremalPoint(x=x0, p=p0)

    csv_path = cfg.out_path("trajectory.csv")
    if t_final == 0.0:
        with open(csv_path, "w", newline="") as fh:
            for line in cfg.header_lines():
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "x3", "x4", "p1", "p2", "p3", "p4",
                        "u1", "u2", "rho", "hmax", "event"])
            hd = lifts(cfg.system, start)
            u = optimal_control(cfg.system, start, tol=cfg.tol)
            w.writerow([_fmt(0.0)] + [_fmt(v) for v in np.concatenate([x0, p0])]
                       + [_fmt(u[0]), _fmt(u[1]), _fmt(hd.rho),
                          _fmt(hmax(cfg.system, start)), ""])
        _write_json(cfg.out_path("switches.json"), {"switches": []}, cfg)
        print(f"wrote {csv_path} (1 row, 0 switches)")
        return EXIT_OK

    ext = propagate_extremal(cfg.system, start, t_final, tol=cfg.tol)
    trajectory_to_csv(cfg.system, ext, csv_path,
                      header_lines=cfg.header_lines())
    events = [{
        "t_bar": ev.t_bar,
        "z_bar": ev.z_bar.tolist(),
        "sigma_class": ev.sigma_class.name,
        "u_minus": ev.u_minus.tolist(),
        "u_plus": ev.u_plus.tolist(),
        "lam": ev.lam,
        "rho_slope": ev.slope,
    } for ev in ext.switches]
    _write_json(cfg.out_path("switches.json"), {"switches": events}, cfg)
    nrows = sum(len(a.samples) for a in ext.arcs) + len(ext.switches)
    print(f"wrote {csv_path} ({nrows} rows, {ext.switch_count} switches)")
    return EXIT_OK


def cmd_classify(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    p0 = cfg.require_vec("p0")
    horizon = cfg.num("horizon", 5.0)
    res = stratum_of(cfg.system, ExtremalPoint(x=x0, p=p0), horizon,
                     tol=cfg.tol)
    if res.t_bar is not None:
        print(f"{res.label}, t_bar={res.t_bar:.6f}")
    else:
        print(res.label)
    _write_json(cfg.out_path("stratum.json"),
                {"label": res.label, "t_bar": res.t_bar,
                 "both_directions": res.both}, cfg)
    return EXIT_OK


def cmd_jacobi(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    p0 = cfg.require_vec("p0")
    t_final = cfg.require_num("tf")
    p0cost = cfg.num("p0_cost", -1.0)
    npoints = cfg.int_("npoints", 201)
    start = ExtremalPoint(x=x0, p=p0, p0cost=p0cost)
    ext = propagate_extremal(cfg.system, start, t_final, tol=cfg.tol)
    if ext.switch_count == 0:
        profile, verdict = smooth_conjugate_test(cfg.system, ext, tol=cfg.tol)
    else:
        profile = det_m_profile(cfg.system, ext, tol=cfg.tol, npoints=npoints)
        verdict = check_theorem3(profile, p0cost)
    profile_to_csv(profile, cfg.out_path("det_profile.csv"),
                   header_lines=cfg.header_lines())
    verdict_to_json(profile, verdict, cfg.out_path("verdict.json"),
                    extra={"config": cfg.resolved()})
    flags = f"normal={verdict.normal} disconjugate={verdict.disconjugate} " \
            f"same_sign={verdict.same_sign}"
    print(f"{'switching' if ext.switch_count else 'smooth'} test: {flags}")
    if verdict.reasons:
        print("reasons: " + "; ".join(verdict.reasons))
    return EXIT_OK


def cmd_shoot(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    x_f = cfg.require_vec("xf")
    guess_p0 = cfg.require_vec("guess_p0")
    guess_tf = cfg.require_num("guess_tf")
    max_iter = cfg.int_("max_iter", 25)
    r = shoot(cfg.system, x0, x_f, guess_p0, guess_tf, tol=cfg.tol,
              max_iter=max_iter)
    _write_json(cfg.out_path("shoot.json"), {
        "converged": r.converged,
        "p0": r.p0.tolist(),
        "t_f": r.t_f,
        "residual": r.residual.tolist(),
        "residual_norm": r.residual_norm,
        "level": r.level,
        "iterations": r.iterations,
        "switch_count": r.switch_count,
    }, cfg)
    print(f"converged in {r.iterations} iterations: t_f={r.t_f:.12g}, "
          f"|residual|={r.residual_norm:.3e}, switches={r.switch_count}")
    return EXIT_OK


def cmd_value_map(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    center = cfg.require_vec("center")
    direction = cfg.require_vec("direction")
    dnorm = float(np.linalg.norm(direction))
    if dnorm == 0.0:
        raise ConfigError("direction must be nonzero")
    direction = direction / dnorm
    span = cfg.num("span", 0.01)
    count = cfg.int_("count", 21)
    if count < 1:
        raise ConfigError("count must be at least 1")
    guess_p0 = cfg.require_vec("guess_p0")
    guess_tf = cfg.require_num("guess_tf")

    offsets = np.linspace(-span, span, count) if count > 1 else np.array([0.0])
    pts = [center + s * direction for s in offsets]
    result = tf_map_sample(cfg.system, x0, pts, guess_p0, guess_tf,
                           tol=cfg.tol)

    csv_path = cfg.out_path("value_map.csv")
    with open(csv_path, "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        for key in ("slope_before", "slope_after", "seam_s",
                    "tf_before", "tf_after"):
            val = getattr(result, key)
            fh.write(f"# {key}: {'' if val is None else _fmt(val)}\n")
        w = csv.writer(fh)
        w.writerow(["s", "xf1", "xf2", "xf3", "xf4", "tf",
                    "p01", "p02", "p03", "p04",
                    "converged", "side", "iterations", "switch_count",
                    "error"])
        for row in result.rows:
            p_cols = ([_fmt(v) for v in row.p0] if row.p0 is not None
                      else [""] * 4)
            w.writerow([_fmt(row.s)] + [_fmt(v) for v in row.x_f]
                       + [_fmt(row.t_f)] + p_cols
                       + [int(row.converged), _fmt(row.side),
                          row.iterations, row.switch_count,
                          row.error or ""])
    summary = {
        "slope_before": result.slope_before,
        "slope_after": result.slope_after,
        "seam_s": result.seam_s,
        "tf_before": result.tf_before,
        "tf_after": result.tf_after,
        "n_converged": sum(r.converged for r in result.rows),
        "n_failed": sum(not r.converged for r in result.rows),
    }
    _write_json(cfg.out_path("value_map.json"), summary, cfg)
    n_ok = summary["n_converged"]
    print(f"wrote {csv_path} ({n_ok}/{len(result.rows)} converged, "
          f"seam_s={result.seam_s})")
    return EXIT_OK


def _scan_cell(task) -> tuple[list[float], str, Optional[float], str]:
    system_name, x0, p, horizon, tol = task
    sys_ = get_system(system_name)
    try:
        res = stratum_of(sys_, ExtremalPoint(x=np.asarray(x0),
                                             p=np.asarray(p)),
                         horizon, tol=tol)
        return list(p), res.label, res.t_bar, ""
    except DiskminError as exc:
        return list(p), "error", None, f"{type(exc).__name__}: {exc}"


def cmd_scan(cfg: RunConfig) -> int:
    x0 = cfg.require_vec("x0")
    p_center = cfg.require_vec("p0")
    horizon = cfg.num("horizon", 5.0)
    radius = cfg.num("radius", 0.1)
    n = cfg.int_("n", 51)
    jobs = cfg.int_("jobs", 1)
    axes_raw = cfg.str_("axes", "2,4")
    try:
        ai, aj = (int(a) for a in axes_raw.split(","))
    except ValueError:
        raise ConfigError(f"axes: expected two comma-separated indices, got "
                          f"'{axes_raw}'")
    if not (1 <= ai <= 4 and 1 <= aj <= 4 and ai != aj):
        raise ConfigError("axes must be two distinct indices in 1..4")

    grid = np.linspace(-radius, radius, n)
    tasks = []
    for di in grid:
        for dj in grid:
            p = p_center.copy()
            p[ai - 1] += di
            p[aj - 1] += dj
            tasks.append((cfg.system_name, x0.tolist(), p.tolist(),
                          horizon, cfg.tol))

    if jobs and jobs > 1:
        with Pool(processes=jobs) as pool:
            cells = pool.map(_scan_cell, tasks, chunksize=8)
    else:
        cells = [_scan_cell(t) for t in tasks]

    csv_path = cfg.out_path("scan.csv")
    counts: dict[str, int] = {}
    with open(csv_path, "w", newline="") as fh:
        for line in cfg.header_lines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["p1", "p2", "p3", "p4", "label", "t_bar", "error"])
        for p, label, t_bar, err in cells:
            counts[label] = counts.get(label, 0) + 1
            w.writerow([_fmt(v) for v in p]
                       + [label, "" if t_bar is None else _fmt(t_bar), err])
    total = len(cells)
    breakdown = " ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    print(f"wrote {csv_path} ({total} cells: {breakdown})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="diskmin",
                     description="time-minimal extremals of 4D affine "
                                 "systems with disk control")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--system", help="registered system name")
        p.add_argument("--x0", help="initial state, comma-separated")
        p.add_argument("--p0", help="initial covector, comma-separated")
        p.add_argument("--tf", type=float, help="final time")
        p.add_argument("--horizon", type=float, help="integration horizon")
        p.add_argument("--tol-int", dest="tol_int", type=float,
                       help="integrator local error tolerance")
        p.add_argument("--tol-switch", dest="tol_switch", type=float,
                       help="relative switch acceptance tolerance")
        p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
        p.add_argument("--config", help="JSON configuration file")

    p = sub.add_parser("simulate", help="propagate an extremal, dump CSV")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", help="stratify an initial covector")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("jacobi", help="determinant profile and verdict")
    common(p)
    p.add_argument("--p0-cost", dest="p0_cost", type=float,
                   help="cost multiplier (negative: normal)")
    p.add_argument("--npoints", type=int, help="profile grid size")
    p.set_defaults(func=cmd_jacobi)

    p = sub.add_parser("shoot", help="solve the two-point boundary problem")
    common(p)
    p.add_argument("--xf", help="target state, comma-separated")
    p.add_argument("--guess-p0", dest="guess_p0", help="covector guess")
    p.add_argument("--guess-tf", dest="guess_tf", type=float,
                   help="final-time guess")
    p.add_argument("--tol-shoot", dest="tol_shoot", type=float,
                   help="relative endpoint residual tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int,
                   help="Newton iteration budget")
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("value-map", help="sample t_f along an endpoint "
                                         "segment across the seam")
    common(p)
    p.add_argument("--center", help="segment midpoint, comma-separated")
    p.add_argument("--direction", help="segment direction, comma-separated")
    p.add_argument("--span", type=float, help="half-length of the segment")
    p.add_argument("--count", type=int, help="number of samples")
    p.add_argument("--guess-p0", dest="guess_p0", help="covector guess")
    p.add_argument("--guess-tf", dest="guess_tf", type=float,
                   help="final-time guess")
    p.add_argument("--tol-shoot", dest="tol_shoot", type=float,
                   help="relative endpoint residual tolerance")
    p.set_defaults(func=cmd_value_map)

    p = sub.add_parser("scan", help="stratum map over a covector grid")
    common(p)
    p.add_argument("--axes", help="two covector indices to vary, e.g. 2,4")
    p.add_argument("--radius", type=float, help="grid half-width")
    p.add_argument("--n", type=int, help="grid points per axis")
    p.add_argument("--jobs", type=int, help="worker processes")
    p.set_defaults(func=cmd_scan)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = RunConfig(args)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}")
        return EXIT_CONFIG
    except AssumptionViolated as exc:
        print(f"assumption violated: {exc}")
        return EXIT_ASSUMPTION
    except DiskminError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}")
        return EXIT_NUMERICS


if __name__ == "__main__":
    raise SystemExit(main())
