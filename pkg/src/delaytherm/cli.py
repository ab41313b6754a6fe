"""Command line entry point: ``delaytherm <command> [options]``.

Commands write CSV files (``#`` metadata header followed by a table) into
``--out`` and, with ``--svg``, an SVG rendering next to each CSV.  Options can
also come from a flat ``key = value`` file given with ``--config``; explicit
command-line flags win.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 a ``compare`` verdict failed.
"""

from __future__ import annotations

import argparse
import ast
import logging
import math
import operator
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, analytic, plots, simulate, sweep
from .config import load_config
from .errors import ConfigError, DelayThermError, InvalidParameterError, JoinError
from .model import ReducedParams, validity_domain
from .records import (
    SWEEP_COLUMNS,
    read_sweep,
    render_table,
    write_table,
    write_trajectory,
)

log = logging.getLogger("delaytherm")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_COMPARE = 0, 1, 2, 3
FIGURES = ("fig3", "fig4", "fig5", "suppQ", "suppBound")
MODES = ("analytic", "simulate", "sweep-delay", "sweep-q", "fit-gain", "figure", "compare")
# options that do not change results and stay out of the metadata header
_NOT_RECORDED = {"config", "out", "workers", "verbose", "func", "svg"}


# ---------------------------------------------------------------------------
# value parsing

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}


def number(text: str) -> float:
    """Parse a float or a small arithmetic expression in ``pi`` (``2.04pi``, ``5*pi/4``)."""
    s = str(text).strip().replace("π", "pi")
    try:
        return float(s)
    except ValueError:
        pass
    # allow a numeric prefix directly before pi, as in "2.04pi"
    s = re.sub(r"(\d)\s*pi", r"\1*pi", s)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        return float(ev(ast.parse(s, mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Validated, fully resolved settings of one command invocation."""

    mode: str
    options: dict
    output_dir: Path
    emit_svg: bool = False
    seed: int = 0
    workers: int = 1
    figure: Optional[str] = None
    sim: sweep.SimSettings = field(default_factory=sweep.SimSettings)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", field="mode")
        if self.mode == "figure" and self.figure not in FIGURES:
            raise ConfigError(f"unknown figure {self.figure!r}; choose from {FIGURES}", field="figure")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", field="seed")
        for key in ("n_tau", "n_q", "n_traj", "sim_points"):
            if key in self.options and self.options[key] is not None and self.options[key] < 0:
                raise ConfigError(f"{key} must be non-negative", field=key)
        taus = self.options.get("taus")
        if taus is not None and (len(taus) == 0 or list(taus) != sorted(taus)):
            raise ConfigError("taus must be non-empty and sorted", field="taus")
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory: {exc}", field="out") from exc
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigError(f"output directory {self.output_dir} is not writable", field="out")

    def metadata(self) -> dict:
        meta = {"command": self.mode}
        if self.figure:
            meta["figure"] = self.figure
        meta["version"] = __version__
        meta["seed"] = self.seed
        for key in sorted(self.options):
            value = self.options[key]
            if key not in _NOT_RECORDED and key not in ("mode", "figure", "seed") and value is not None:
                meta[key] = value
        return meta

    def path(self, stem: str, suffix: str = ".csv") -> Path:
        return self.output_dir / f"{stem}{suffix}"


# ---------------------------------------------------------------------------
# argument parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="flat key = value file with option defaults")
    p.add_argument("--seed", type=int, default=0, help="root seed for all simulations")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--svg", action="store_true", help="also write SVG renderings")
    p.add_argument("--workers", type=int, default=1, help="threads for simulations (results unchanged)")
    p.add_argument("--verbose", "-v", action="store_true")


def _point(p, g=0.36, q0=55.0, tau=2.04 * math.pi):
    p.add_argument("--g", type=number, default=g, help="feedback gain")
    p.add_argument("--q0", type=number, default=q0, help="quality factor")
    p.add_argument("--tau", type=number, default=tau, help="dimensionless delay (accepts e.g. 2.04pi)")


def _tau_grid(p, lo, hi, n):
    p.add_argument("--tau-min", type=number, default=lo)
    p.add_argument("--tau-max", type=number, default=hi)
    p.add_argument("--n-tau", type=int, default=n)
    p.add_argument("--taus", type=number, nargs="+", help="explicit delay grid (overrides tau-min/max/n)")


def _sim_opts(p, sim_points=None):
    p.add_argument("--dt", type=number, default=simulate.DEFAULT_DT, help="integration step")
    p.add_argument("--n-traj", type=int, default=16)
    p.add_argument("--duration-q", type=number, default=2000.0,
                   help="recorded duration per trajectory in units of q0")
    if sim_points is not None:
        p.add_argument("--sim-points", type=int, default=sim_points,
                       help="number of simulated grid points overlaid on the theory curve")


def _sources(p, default):
    p.add_argument("--sources", nargs="+", default=list(default),
                   choices=("closed", "quadrature", "simulation"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delaytherm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    p = sub.add_parser("analytic", help="steady state and rates at one parameter point")
    _common(p)
    _point(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("simulate", help="integrate trajectories at one parameter point")
    _common(p)
    _point(p)
    p.add_argument("--dt", type=number, default=simulate.DEFAULT_DT)
    p.add_argument("--n-steps", type=int, default=100_000)
    p.add_argument("--record-stride", type=int, default=1)
    p.add_argument("--n-traj", type=int, default=1,
                   help="1 exports the trajectory; more writes ensemble statistics")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-delay", help="steady state along a delay grid")
    _common(p)
    p.add_argument("--g", type=number, default=0.36)
    p.add_argument("--q0", type=number, default=55.0)
    _tau_grid(p, 0.5 * math.pi, 60 * math.pi, 25)
    _sources(p, ("closed",))
    _sim_opts(p)
    p.set_defaults(func=cmd_sweep_delay)

    p = sub.add_parser("sweep-q", help="steady state along a quality-factor grid at fixed delay")
    _common(p)
    p.add_argument("--tau", type=number, default=1.25 * math.pi)
    p.add_argument("--g", type=number, help="fixed gain")
    p.add_argument("--g-per-q", type=number, help="gain proportional to q0 (g = g_per_q * q0)")
    p.add_argument("--q-min", type=number, default=20.0)
    p.add_argument("--q-max", type=number, default=100.0)
    p.add_argument("--n-q", type=int, default=17)
    _sources(p, ("closed",))
    _sim_opts(p)
    p.set_defaults(func=cmd_sweep_q)

    p = sub.add_parser("fit-gain", help="fit the feedback gain to a T_eff(tau) curve in a sweep CSV")
    _common(p)
    p.add_argument("--input", required=True, help="sweep CSV")
    p.add_argument("--source", choices=("closed", "quadrature", "simulation"),
                   help="rows to fit (default: simulation if present)")
    p.add_argument("--model", choices=("sigma_v2", "sigma_q2"), default="sigma_v2")
    p.add_argument("--g-max", type=number)
    p.set_defaults(func=cmd_fit_gain)

    p = sub.add_parser("figure", help="reproduce a figure as CSV (and SVG)")
    _common(p)
    p.add_argument("figure", choices=FIGURES)
    p.add_argument("--g", type=number, help="feedback gain (default 0.36; suppQ uses g-per-q)")
    p.add_argument("--q0", type=number, default=55.0)
    p.add_argument("--tau-min", type=number)
    p.add_argument("--tau-max", type=number)
    p.add_argument("--n-tau", type=int)
    p.add_argument("--rel-g", type=number, default=0.06, help="relative gain drift for envelopes")
    p.add_argument("--rel-tau", type=number, default=0.025, help="relative delay drift for envelopes")
    p.add_argument("--q-min", type=number)
    p.add_argument("--q-max", type=number)
    p.add_argument("--n-q", type=int)
    p.add_argument("--g-per-q", type=number, default=0.0094)
    p.add_argument("--boundary-qs", type=number, nargs="+",
                   help="quality factors at which fig5 locates the cooling boundary")
    p.add_argument("--source", choices=("closed", "quadrature"), default="quadrature")
    _sim_opts(p, sim_points=0)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("compare", help="join sweep CSVs from different sources and judge them")
    _common(p)
    p.add_argument("inputs", nargs="+", help="sweep CSV files")
    p.add_argument("--dt", type=number, help="join tolerance is dt/2 (default: from file metadata)")
    p.add_argument("--rel-tol", type=number, default=1e-6)
    p.add_argument("--z-max", type=number, default=3.0)
    p.add_argument("--coverage", type=number, default=0.95)
    p.set_defaults(func=cmd_compare)
    return parser


def _subparser(parser, mode):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[mode]
    raise KeyError(mode)


def _apply_config(sub, cfg: dict):
    """Convert config-file values with each option's own type and install them as defaults."""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        if key in ("config",) or key not in actions or key == "help":
            raise ConfigError(f"unknown configuration key {key!r}", field=key)
        action = actions[key]
        conv = action.type or (lambda x: x)
        try:
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = _bool(value if isinstance(value, str) else value[-1])
            elif action.nargs in ("+", "*"):
                items = value if isinstance(value, list) else value.split()
                defaults[key] = [conv(v) for v in items]
            else:
                if isinstance(value, list):
                    raise ValueError("given more than once")
                defaults[key] = conv(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", field=key) from exc
        if action.choices is not None:
            vals = defaults[key] if isinstance(defaults[key], list) else [defaults[key]]
            bad = [v for v in vals if v not in action.choices]
            if bad:
                raise ConfigError(f"invalid choice {bad} for {key!r}", field=key)
    sub.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        cfg = load_config(ns.config)
        _apply_config(_subparser(parser, ns.mode), cfg)
        ns = parser.parse_args(argv)
    return ns


def to_run_config(ns: argparse.Namespace) -> RunConfig:
    opts = {k: v for k, v in vars(ns).items() if k not in ("func",)}
    sim = sweep.SimSettings(dt=opts.get("dt") or simulate.DEFAULT_DT, n_traj=opts.get("n_traj") or 16,
                            duration_q=opts.get("duration_q") or 2000.0, workers=max(1, ns.workers))
    return RunConfig(mode=ns.mode, options=opts, output_dir=Path(ns.out), emit_svg=ns.svg,
                     seed=ns.seed, workers=max(1, ns.workers), figure=opts.get("figure"), sim=sim)


# ---------------------------------------------------------------------------
# output helpers


def _emit(rc: RunConfig, stem: str, meta: dict, rows, extra_columns=()) -> Path:
    columns = SWEEP_COLUMNS + tuple(extra_columns)
    text = render_table(meta, columns, rows)
    path = rc.path(stem)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    if rc.emit_svg:
        svg = plots.render_text(text)
        rc.path(stem, ".svg").write_text(svg, encoding="utf-8")
        log.info("wrote %s", rc.path(stem, ".svg"))
    return path


def _tau_list(o, lo, hi, n):
    if o.get("taus"):
        return [float(t) for t in o["taus"]]
    lo = o.get("tau_min") if o.get("tau_min") is not None else lo
    hi = o.get("tau_max") if o.get("tau_max") is not None else hi
    n = o.get("n_tau") if o.get("n_tau") is not None else n
    return [float(t) for t in sweep.linear_grid(lo, hi, n)]


def _grid_meta(taus) -> dict:
    return {"tau_min": taus[0], "tau_max": taus[-1], "n_tau": len(taus)}


def _sim_meta(rc: RunConfig, sources) -> dict:
    if "simulation" not in sources:
        return {}
    return {"generator": simulate.generator_id(), "point_seeds": "derive_seed(seed, grid_index)"}


def _flagged(rows):
    bad = [r for r in rows if r.status != "ok"]
    for r in bad:
        log.warning("%s row at g=%s q0=%s tau=%s flagged %s", r.source, r.g, r.q0, r.tau_realized, r.status)
    return bad


# ---------------------------------------------------------------------------
# commands


def cmd_analytic(rc: RunConfig) -> int:
    o = rc.options
    r = ReducedParams(o["g"], o["q0"], o["tau"])
    rows = [sweep.theory_row(r, s) for s in ("closed", "quadrature")]
    meta = rc.metadata()
    meta["title"] = f"steady state at g={r.g}, q0={r.q0}, tau={r.tau}"
    if validity_domain(r)["underdamped_asymptotics"]:
        asym = analytic.asymptotic_long_delay(r)
        meta.update({f"asymptotic_{k}": v for k, v in asym.items()})
    _emit(rc, "analytic", meta, rows)
    for row in rows:
        print(f"[{row.source}] status={row.status}")
        for key in ("sigma_q2", "sigma_v2", "corr", "s_pump", "w_ext", "s_i", "s_vfb", "s_highq",
                    "bound_nm", "eta_pump"):
            print(f"  {key} = {getattr(row, key)!r}")
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_NUMERIC


def cmd_simulate(rc: RunConfig) -> int:
    o = rc.options
    r = ReducedParams(o["g"], o["q0"], o["tau"])
    cfg = simulate.SimConfig(r, dt=o["dt"], n_steps=o["n_steps"], seed=rc.seed,
                             record_stride=o["record_stride"])
    if o["n_traj"] <= 1:
        traj = simulate.integrate(cfg)
        path = write_trajectory(rc.path("trajectory"), traj)
        log.info("wrote %s", path)
        for key, value in traj.stats.items():
            print(f"{key} = {value!r}")
        return EXIT_OK
    est = simulate.ensemble(cfg, o["n_traj"], workers=rc.workers)
    meta = rc.metadata()
    meta.update(cfg.as_dict())
    meta.update({"tau_realized": cfg.tau_realized, "generator": simulate.generator_id()})
    columns = ("n_traj", "mean_sigma_q2", "se_sigma_q2", "mean_sigma_v2", "se_sigma_v2",
               "mean_corr", "se_corr")
    row = [est.n_traj, est.mean_sigma_q2, est.se_sigma_q2, est.mean_sigma_v2, est.se_sigma_v2,
           est.mean_corr, est.se_corr]
    write_table(rc.path("ensemble"), meta, columns, [row])
    for c, v in zip(columns, row):
        print(f"{c} = {v!r}")
    return EXIT_OK


def cmd_sweep_delay(rc: RunConfig) -> int:
    o = rc.options
    taus = _tau_list(o, 0.5 * math.pi, 60 * math.pi, 25)
    rows = sweep.sweep_delay(o["g"], o["q0"], taus, sources=o["sources"], seed=rc.seed, sim=rc.sim)
    meta = rc.metadata()
    meta["title"] = f"T_eff/T0 versus delay, g={o['g']}, q0={o['q0']}"
    meta.update(_sim_meta(rc, o["sources"]))
    _flagged(rows)
    _emit(rc, "sweep_delay", meta, rows)
    return EXIT_OK


def cmd_sweep_q(rc: RunConfig) -> int:
    o = rc.options
    if (o.get("g") is None) == (o.get("g_per_q") is None):
        raise ConfigError("give exactly one of --g and --g-per-q", field="g")
    qs = sweep.linear_grid(o["q_min"], o["q_max"], o["n_q"])
    rows = sweep.sweep_q(qs, o["tau"], g=o.get("g"), g_per_q=o.get("g_per_q"),
                         sources=o["sources"], seed=rc.seed, sim=rc.sim)
    meta = rc.metadata()
    meta["title"] = f"rates versus q0 at tau={o['tau']}"
    meta.update(_sim_meta(rc, o["sources"]))
    _flagged(rows)
    _emit(rc, "sweep_q", meta, rows)
    return EXIT_OK


def cmd_fit_gain(rc: RunConfig) -> int:
    from . import analyze

    o = rc.options
    meta_in, rows = read_sweep(o["input"])
    sources = {r.source for r in rows}
    source = o.get("source") or ("simulation" if "simulation" in sources else sorted(sources)[0])
    use = [r for r in rows if r.source == source and r.status == "ok"]
    q0s = {r.q0 for r in use}
    if len(q0s) != 1:
        raise ConfigError(f"fit needs rows at a single q0, found {sorted(q0s)}", field="input")
    q0 = q0s.pop()
    col = o["model"]
    taus = [r.tau_realized for r in use]
    vals = [getattr(r, col) for r in use]
    ses = [getattr(r, "se_" + col) for r in use]
    sigma = ses if all(s is not None and s > 0 for s in ses) else None
    fit = analyze.fit_gain(taus, vals, q0, model=col, sigma=sigma, g_max=o.get("g_max"))
    meta = rc.metadata()
    meta.update({"input_source": source, "q0": q0, "weighted": sigma is not None})
    columns = ("parameter", "value", "stderr", "residual_norm", "n_points", "model", "q0", "source")
    row = ["g", fit.value, fit.stderr, fit.residual_norm, fit.n_points, col, q0, source]
    write_table(rc.path("fit_gain"), meta, columns, [row])
    print(f"g = {fit.value!r} +- {fit.stderr!r} ({col} model, {fit.n_points} points, source {source})")
    return EXIT_OK


# figures ------------------------------------------------------------------


def _envelope_columns(r0, taus, rel_g, rel_tau, quantities, source):
    cols = {}
    for q in quantities:
        env = analytic.drift_envelope(r0, rel_g, rel_tau, q, taus, source=source)
        cols[f"{q}_lo"], cols[f"{q}_hi"] = env["lower"], env["upper"]
    return cols


def _with_columns(rows, cols, role="curve"):
    out = []
    for k, row in enumerate(rows):
        d = row.as_dict()
        d["role"] = role
        for name, arr in cols.items():
            d[name] = arr[k]
        out.append(d)
    return out


def _simulated(rc, points, seed=None):
    """Simulation rows for ``(params, tau_requested)`` points, seeded per point index."""
    if not points:
        return []
    rows = sweep.run_points(points, ("simulation",), seed=rc.seed if seed is None else seed, sim=rc.sim)
    _flagged(rows)
    out = []
    for row in rows:
        d = row.as_dict()
        d["role"] = "overlay"
        out.append(d)
    return out


def _overlay_points(taus, n, make):
    if n <= 0:
        return []
    idx = np.unique(np.round(np.linspace(0, len(taus) - 1, n)).astype(int))
    return [make(taus[i]) for i in idx]


def fig_rates_vs_delay(rc: RunConfig) -> int:
    o = rc.options
    g = 0.36 if o.get("g") is None else o["g"]
    taus = _tau_list(o, 0.5 * math.pi, 60 * math.pi, 400)
    r0 = ReducedParams(g, o["q0"], 0.0)
    rows = sweep.sweep_delay(g, o["q0"], taus, sources=(o["source"],))
    cols = _envelope_columns(r0, taus, o["rel_g"], o["rel_tau"], ("s_pump", "w_ext"), o["source"])
    table = _with_columns(rows, cols)
    table += _simulated(rc, _overlay_points(taus, o["sim_points"], lambda t: (r0.replace(tau=t), t)))
    meta = rc.metadata()
    meta.update({"g": g, "title": f"entropy pumping and extracted work, g={g}, q0={o['q0']}"})
    meta.update(_grid_meta(taus))
    meta.update(_sim_meta(rc, ("simulation",) if o["sim_points"] else ()))
    _emit(rc, "fig3", meta, table, extra_columns=("role",) + tuple(cols))
    return EXIT_OK


def fig_correlation(rc: RunConfig) -> int:
    o = rc.options
    g = 0.36 if o.get("g") is None else o["g"]
    taus = _tau_list(o, 0.5 * math.pi, 90 * math.pi, 400)
    r0 = ReducedParams(g, o["q0"], 0.0)
    rows = sweep.sweep_delay(g, o["q0"], taus, sources=(o["source"],))
    table = _with_columns(rows, {})
    table += _simulated(rc, _overlay_points(taus, o["sim_points"], lambda t: (r0.replace(tau=t), t)))
    meta = rc.metadata()
    meta.update({"g": g, "title": f"delayed correlation c(tau), g={g}, q0={o['q0']}"})
    meta.update(_grid_meta(taus))
    if validity_domain(r0)["underdamped_asymptotics"]:
        asym = analytic.asymptotic_long_delay(r0)
        meta.update({"corr_inf": asym["corr_inf_exact"], "corr_inf_leading": asym["corr_inf"]})
    meta.update(_sim_meta(rc, ("simulation",) if o["sim_points"] else ()))
    _emit(rc, "fig4", meta, table, extra_columns=("role",))
    return EXIT_OK


def fig_temperature_map(rc: RunConfig) -> int:
    o = rc.options
    g = 0.36 if o.get("g") is None else o["g"]
    # eight samples per 2 pi keep the delay oscillation resolved
    taus = _tau_list(o, 0.5 * math.pi, 80 * math.pi, 633)
    q_min = 5.0 if o.get("q_min") is None else o["q_min"]
    q_max = 60.0 if o.get("q_max") is None else o["q_max"]
    n_q = 23 if o.get("n_q") is None else o["n_q"]
    qs = [float(q) for q in sweep.linear_grid(q_min, q_max, n_q)]
    cut_q = o["q0"]
    table = []
    for q in qs:
        table += _with_columns(sweep.sweep_delay(g, q, taus, sources=("quadrature",)), {}, role="map")
    table += _with_columns(sweep.sweep_delay(g, cut_q, taus, sources=("quadrature",)), {}, role="cut")
    bqs = o.get("boundary_qs") or [float(q) for q in np.linspace(q_min, q_max, 12)]
    for q in bqs:
        tau_b = analytic.cooling_boundary(g, q)
        table.append({"g": g, "q0": q, "tau_requested": tau_b, "tau_realized": tau_b,
                      "source": "quadrature", "status": "ok" if tau_b is not None else "no_cooling",
                      "role": "boundary"})
        log.info("cooling boundary q0=%s: %s", q, tau_b)
    meta = rc.metadata()
    meta.update({"g": g, "quantity": "sigma_q2", "title": f"T_eff/T0 = sigma_q2 over (tau, q0), g={g}",
                 "cut_q0": cut_q, "q_min": q_min, "q_max": q_max, "n_q": n_q,
                 "boundary_qs": bqs})
    meta.update(_grid_meta(taus))
    r_cut = ReducedParams(g, cut_q, 0.0)
    if validity_domain(r_cut)["underdamped_asymptotics"]:
        meta["cut_plateau_sigma_q2"] = analytic.asymptotic_long_delay(r_cut)["sigma_q2_inf"]
    _emit(rc, "fig5", meta, table, extra_columns=("role",))
    return EXIT_OK


def fig_quality_sweeps(rc: RunConfig) -> int:
    o = rc.options
    q_min = 20.0 if o.get("q_min") is None else o["q_min"]
    q_max = 100.0 if o.get("q_max") is None else o["q_max"]
    n_q = 33 if o.get("n_q") is None else o["n_q"]
    qs = [float(q) for q in sweep.linear_grid(q_min, q_max, n_q)]
    k = o["g_per_q"]
    table = []
    extra = ("role", "tau_case", "s_pump_lo", "s_pump_hi", "w_ext_lo", "w_ext_hi")
    for case, tau in enumerate((1.25 * math.pi, 1.25 * math.pi + 18 * math.pi)):
        rows = sweep.sweep_q(qs, tau, g_per_q=k, sources=(o["source"],))
        for row in rows:
            r = sweep.row_params(row)
            d = row.as_dict()
            d.update({"role": "curve", "tau_case": case})
            for q in ("s_pump", "w_ext"):
                env = analytic.drift_envelope(r, o["rel_g"], o["rel_tau"], q, [tau], source=o["source"])
                d[f"{q}_lo"], d[f"{q}_hi"] = env["lower"][0], env["upper"][0]
            table.append(d)
        sims = _overlay_points(qs, o["sim_points"], lambda q: (ReducedParams(k * q, q, tau), tau))
        for d in _simulated(rc, sims, seed=simulate.derive_seed(rc.seed, case)):
            d["tau_case"] = case
            table.append(d)
    meta = rc.metadata()
    meta.update({"q_min": q_min, "q_max": q_max, "n_q": n_q})
    meta.update({"title": f"rates versus q0 at g = {k} q0, tau = 5pi/4 and 5pi/4 + 18pi",
                 "tau_cases": [1.25 * math.pi, 1.25 * math.pi + 18 * math.pi]})
    meta.update(_sim_meta(rc, ("simulation",) if o["sim_points"] else ()))
    _emit(rc, "suppQ", meta, table, extra_columns=extra)
    return EXIT_OK


def fig_bound(rc: RunConfig) -> int:
    o = rc.options
    g = 0.36 if o.get("g") is None else o["g"]
    taus = _tau_list(o, 0.5 * math.pi, 60 * math.pi, 400)
    rows = sweep.sweep_delay(g, o["q0"], taus, sources=(o["source"],))
    table = []
    for row in rows:
        d = row.as_dict()
        d["role"] = "curve"
        if row.status == "ok" and g > 0:
            m = analytic.SteadyStateMoments(row.sigma_q2, row.sigma_v2, row.corr)
            nm = analytic.nonmarkov_bound(sweep.row_params(row), m)
            d.update({"s_pump_y": nm["s_pump_y"], "i_flow": nm["i_flow"], "bound_holds": nm["holds"]})
        table.append(d)
    meta = rc.metadata()
    meta.update({"g": g, "title": f"entropy pumping and non-Markovian bound, g={g}, q0={o['q0']}"})
    meta.update(_grid_meta(taus))
    _emit(rc, "suppBound", meta, table, extra_columns=("role", "s_pump_y", "i_flow", "bound_holds"))
    return EXIT_OK


FIGURE_COMMANDS = {"fig3": fig_rates_vs_delay, "fig4": fig_correlation, "fig5": fig_temperature_map,
                   "suppQ": fig_quality_sweeps, "suppBound": fig_bound}


def cmd_figure(rc: RunConfig) -> int:
    return FIGURE_COMMANDS[rc.figure](rc)


def cmd_compare(rc: RunConfig) -> int:
    o = rc.options
    rows, dts = [], []
    for path in o["inputs"]:
        meta, part = read_sweep(path)
        rows += part
        if "dt" in meta and meta["dt"]:
            dts.append(float(meta["dt"]))
    dt = o.get("dt") or (max(dts) if dts else simulate.DEFAULT_DT)
    report = sweep.compare(rows, dt=dt, rel_tol=o["rel_tol"], z_max=o["z_max"], coverage=o["coverage"])
    meta = rc.metadata()
    meta["join_tolerance"] = dt / 2
    for v in report.verdicts:
        meta[f"verdict_{v.name}"] = "pass" if v.passed else "fail"
    write_table(rc.path("compare"), meta, sweep.COMPARE_COLUMNS, report.rows)
    summary = report.table()
    rc.path("compare_summary", ".txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)
    return EXIT_OK if report.passed else EXIT_COMPARE


# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
    except ConfigError as exc:
        print(f"delaytherm: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        rc = to_run_config(ns)
        return ns.func(rc)
    except (ConfigError, InvalidParameterError, JoinError) as exc:
        print(f"delaytherm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DelayThermError as exc:
        print(f"delaytherm: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
