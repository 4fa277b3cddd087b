"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

Configuration files are INI-style. A ``[scenario]`` section holds the fields
of :class:`~adaptive_bias.sim.ScenarioConfig` (keys are case-sensitive, so
``a`` is the intercept and ``A`` the latent offset)::

    [scenario]
    scheme = UD
    N = 25
    T = 25
    seed = 1

An optional ``[estimation]`` section sets ``estimators``, ``weight_mode`` and
``M``. A study file adds ``[study]`` with ``setups`` (e.g. ``1-12``),
``schemes``, ``R`` and ``seed``; the ``[scenario]`` section then supplies shared
overrides. Alternatively, any number of ``[scenario:<id>]`` sections define
the grid explicitly.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from dataclasses import fields

import numpy as np

from . import bias as bias_mod
from . import dag as dag_mod
from .estimators import ESTIMATORS, FitError, default_estimators, run_estimator
from .estimators.latent_class import WEIGHT_MODES
from .rng import stream
from .sim import SCHEMES, ScenarioConfig, read_trials_csv, simulate_dataset, write_trials_csv
from .study import StudyGrid, run_study, write_plot_csv, write_summary_csv

__all__ = ["ConfigError", "FIT_FIELDS", "load_config", "load_study", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FIT_FIELDS = ("estimator", "param", "estimate", "se", "converged", "loglik", "iterations")

_INT_FIELDS = {"N", "T", "L", "R", "seed"}
_STR_FIELDS = {"scheme", "effect_model", "updown_rule"}
_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}


class ConfigError(ValueError):
    """Bad configuration; the message names the file, line and field."""


class _Source:
    def __init__(self, path: str):
        self.path = path
        try:
            with open(path, encoding="utf-8") as fh:
                self.text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(self.text, source=path)
        except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
            what = f"[{exc.section}] {exc.option}" if getattr(exc, "option", None) else f"[{exc.section}]"
            raise ConfigError(f"{path}:{exc.lineno}: {what}: duplicate entry (line {exc.lineno})") from None
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: no section headers before first key") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None

    def line_of(self, section: str, key: str | None = None) -> int | None:
        current = None
        for n, raw in enumerate(self.text.splitlines(), 1):
            s = raw.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
                if key is None and current == section:
                    return n
            elif current == section and key is not None and "=" in s:
                if s.split("=", 1)[0].strip() == key:
                    return n
        return None

    def error(self, section: str, key: str | None, msg: str) -> ConfigError:
        line = self.line_of(section, key)
        where = f"{self.path}:{line}" if line else self.path
        field = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{where}: {field}: {msg}")


def _parse_value(src: _Source, section: str, key: str, raw: str):
    if key not in _SCENARIO_KEYS:
        raise src.error(section, key, f"unknown key; expected one of {sorted(_SCENARIO_KEYS)}")
    try:
        if key in _STR_FIELDS:
            return raw.strip()
        if key in _INT_FIELDS:
            return int(raw)
        if key == "fd_weights":
            return tuple(float(v) for v in raw.split(","))
        return float(raw)
    except ValueError:
        kind = "integer" if key in _INT_FIELDS else "number"
        raise src.error(section, key, f"expected {kind}, got {raw!r}") from None


def _scenario_kwargs(src: _Source, section: str) -> dict:
    return {k: _parse_value(src, section, k, v) for k, v in src.cp.items(section)}


def _build(src: _Source, section: str, kwargs: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        # locate the offending key when the message names one
        msg = str(exc)
        key = next((k for k in kwargs if msg.startswith(k + " ") or f" {k} " in msg), None)
        raise src.error(section, key, msg) from None


def _estimation(src: _Source) -> dict:
    if not src.cp.has_section("estimation"):
        return {}
    out = {}
    for k, v in src.cp.items("estimation"):
        if k == "estimators":
            names = [s.strip() for s in v.split(",") if s.strip()]
            bad = [n for n in names if n not in ESTIMATORS]
            if bad:
                raise src.error("estimation", k, f"unknown estimator(s) {bad}; choose from {sorted(ESTIMATORS)}")
            out["estimators"] = names
        elif k == "weight_mode":
            if v not in WEIGHT_MODES:
                raise src.error("estimation", k, f"expected one of {list(WEIGHT_MODES)}")
            out["weight_mode"] = v
        elif k == "M":
            try:
                out["M"] = int(v)
            except ValueError:
                raise src.error("estimation", k, f"expected integer, got {v!r}") from None
        else:
            raise src.error("estimation", k, "unknown key; expected estimators, weight_mode or M")
    return out


def load_config(path: str, seed: int | None = None) -> tuple[ScenarioConfig, dict]:
    """Scenario and estimation options from a config file."""
    src = _Source(path)
    if not src.cp.has_section("scenario"):
        raise ConfigError(f"{path}: missing [scenario] section")
    kw = _scenario_kwargs(src, "scenario")
    if seed is not None:
        kw["seed"] = seed
    return _build(src, "scenario", kw), _estimation(src)


def _parse_setups(src: _Source, raw: str) -> list[int]:
    out = []
    try:
        for part in raw.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-")
                out += list(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise src.error("study", "setups", f"expected list like '1-12' or '1,3,5', got {raw!r}") from None
    return out


def load_study(path: str, seed: int | None = None) -> tuple[StudyGrid, dict]:
    """Study grid and estimation options from a config file."""
    src = _Source(path)
    explicit = [s for s in src.cp.sections() if s.startswith("scenario:")]
    opts = _estimation(src)
    if explicit:
        out = []
        for s in explicit:
            kw = _scenario_kwargs(src, s)
            if seed is not None:
                kw["seed"] = seed
            out.append((s.split(":", 1)[1].strip(), _build(src, s, kw)))
        try:
            return StudyGrid(tuple(out), seed if seed is not None else out[0][1].seed), opts
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    if not src.cp.has_section("study"):
        raise ConfigError(f"{path}: need a [study] section or [scenario:<id>] sections")
    st = dict(src.cp.items("study"))
    unknown = set(st) - {"setups", "schemes", "R", "seed"}
    if unknown:
        k = sorted(unknown)[0]
        raise src.error("study", k, "unknown key; expected setups, schemes, R or seed")
    setups = _parse_setups(src, st.get("setups", "1-12"))
    schemes = [s.strip() for s in st.get("schemes", ",".join(SCHEMES)).split(",") if s.strip()]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise src.error("study", "schemes", f"unknown scheme(s) {bad}")
    R = _parse_value(src, "study", "R", st.get("R", "1000"))
    base_seed = _parse_value(src, "study", "seed", st.get("seed", "0"))
    shared = _scenario_kwargs(src, "scenario") if src.cp.has_section("scenario") else {}
    for k in ("scheme", "N", "T", "R", "seed"):
        if k in shared:
            raise src.error("scenario", k, "set per scenario by the study grid; remove it")
    try:
        grid = StudyGrid.table2(seed=base_seed if seed is None else seed, R=R, setups=setups,
                                schemes=schemes, **shared)
    except ValueError as exc:
        raise src.error("study", None, str(exc)) from None
    return grid, opts


# commands --------------------------------------------------------------------

def _write_fit_csv(rows, out) -> None:
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_FIELDS)
        w.writerows(rows)
    finally:
        if out:
            fh.close()


def _fmt(x) -> str:
    x = float(x)
    return "NA" if np.isnan(x) else repr(x)


def cmd_simulate(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    data = simulate_dataset(cfg, args.replication)
    write_trials_csv(data, args.out, include_alpha=args.oracle_alpha)
    return EXIT_OK


def cmd_fit(args) -> int:
    opts: dict = {}
    names = None
    if args.config:
        cfg, est_opts = load_config(args.config)
        opts["A"] = cfg.A
        names = est_opts.get("estimators")
        for k in ("weight_mode", "M"):
            if k in est_opts:
                opts[k] = est_opts[k]
    if args.estimator:
        names = [n.strip() for n in args.estimator.split(",")]
    if not names:
        raise ConfigError("no estimator given; use --estimator or [estimation] estimators")
    bad = [n for n in names if n not in ESTIMATORS]
    if bad:
        raise ConfigError(f"--estimator: unknown {bad}; choose from {sorted(ESTIMATORS)}")
    if args.weight_mode:
        opts["weight_mode"] = args.weight_mode
    if args.A is not None:
        opts["A"] = args.A
    if args.M is not None:
        opts["M"] = args.M
    try:
        data = read_trials_csv(args.trials, L=args.L)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"{args.trials}: {exc}") from None
    rows, failed = [], False
    for name in names:
        o = dict(opts) if name == "latent_em" else {}
        if name == "latent_em":
            o["rng"] = stream(args.seed if args.seed is not None else 0, 0)
        try:
            with np.errstate(all="ignore"):
                fit = run_estimator(name, data, **o)
        except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
            print(f"error: {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
            failed = True
            continue
        if not fit.converged:
            print(f"error: {name}: fit did not converge", file=sys.stderr)
            failed = True
        for p, v in fit.estimates.items():
            rows.append((name, p, _fmt(v), _fmt(fit.standard_errors.get(p, float("nan"))),
                         str(bool(fit.converged)).lower(), _fmt(fit.loglik), str(fit.iterations)))
    _write_fit_csv(rows, args.out)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_study(args) -> int:
    grid, opts = load_study(args.config, args.seed)
    estimators = None
    if args.estimator:
        names = [n.strip() for n in args.estimator.split(",")]
        bad = [n for n in names if n not in ESTIMATORS]
        if bad:
            raise ConfigError(f"--estimator: unknown {bad}")
        estimators = {s: names for s in SCHEMES}
    elif "estimators" in opts:
        estimators = {s: opts["estimators"] for s in SCHEMES}
    est_options = {}
    wm = args.weight_mode or opts.get("weight_mode")
    if wm or "M" in opts:
        est_options["latent_em"] = {k: v for k, v in (("weight_mode", wm), ("M", opts.get("M"))) if v}
    out = args.out or "."
    rows = run_study(grid, threads=args.threads, estimators=estimators, options=est_options,
                     out_dir=os.path.join(out, "scenarios"),
                     progress=(lambda sid: print(f"done {sid}", file=sys.stderr)) if args.verbose else None)
    write_summary_csv(rows, os.path.join(out, "summary.csv"))
    write_plot_csv(rows, os.path.join(out, "plot_data.csv"))
    failed = any(r.R_effective < 2 for r in rows)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_bias_check(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    R = args.R or cfg.R
    weighted = cfg.effect_model == "latent" and cfg.scheme == "FDr"
    if cfg.effect_model != "none" and not weighted:
        raise ConfigError(f"{args.config}: bias-check needs FD/UD, or FDr with latent effects")
    if args.level is not None and not 1 <= args.level <= cfg.L:
        raise ConfigError(f"--level must lie in 1..{cfg.L}")
    fn = bias_mod.weighted_bias_identity_check if weighted else bias_mod.bias_identity_check
    levels = [args.level] if args.level is not None else list(range(1, cfg.L + 1))
    try:
        checks = fn(cfg, levels, R)
    except bias_mod.LevelUnsampledError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    kind = "weighted" if weighted else "unweighted"
    print(f"# {kind} identity, scheme {cfg.scheme}, N={cfg.N}, T={cfg.T}, R={R}, seed={cfg.seed}")
    for c in checks:
        flag = "agree" if c.agrees(3.0) else "DISAGREE"
        print(f"level={c.level} lhs={c.lhs:.6g} rhs={c.rhs:.6g} mc_se={c.mc_se:.3g} "
              f"mean_total={c.mean_total:.6g} {flag}")
    return EXIT_OK


def cmd_dag_check(args) -> int:
    if args.graph:
        try:
            with open(args.graph, encoding="utf-8") as fh:
                g = dag_mod.parse_graph(fh.read())
        except OSError as exc:
            raise ConfigError(f"{args.graph}: {exc.strerror}") from None
    elif args.scheme:
        if args.T is None:
            raise ConfigError("--scheme needs --T")
        g = dag_mod.scheme_dag(args.scheme, args.T)
    else:
        raise ConfigError("give --graph FILE or --scheme NAME --T n")
    A, B, C = dag_mod.parse_query(args.query)
    print("independent" if dag_mod.cond_independent(g, A, B, C) else "dependent")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptive-bias",
                                description="Simulate and analyse fixed and up-down psychometric designs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one trial dataset to CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--replication", type=int, default=0)
    s.add_argument("--oracle-alpha", action="store_true", help="also write realized subject effects")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit estimators to a trial CSV")
    f.add_argument("trials")
    f.add_argument("--estimator", help=f"comma list from {sorted(ESTIMATORS)}")
    f.add_argument("--config", help="optional config supplying A and [estimation] options")
    f.add_argument("--weight-mode", choices=list(WEIGHT_MODES))
    f.add_argument("--A", type=float, help="latent class offset")
    f.add_argument("--M", type=int, help="simulated paths per subject (ud_simulated)")
    f.add_argument("--L", type=int, help="number of grid levels if not all are visited")
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    st = sub.add_parser("study", help="run a scenario grid and write summaries")
    st.add_argument("--config", required=True)
    st.add_argument("--out", help="output directory (default: current)")
    st.add_argument("--seed", type=int)
    st.add_argument("--threads", type=int, default=1)
    st.add_argument("--estimator")
    st.add_argument("--weight-mode", choices=list(WEIGHT_MODES))
    st.add_argument("--verbose", action="store_true")
    st.set_defaults(func=cmd_study)

    b = sub.add_parser("bias-check", help="Monte Carlo check of the bias identity")
    b.add_argument("--config", required=True)
    b.add_argument("--level", type=int)
    b.add_argument("--R", type=int)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bias_check)

    d = sub.add_parser("dag-check", help="conditional independence query, 'A | B | C'")
    d.add_argument("query")
    d.add_argument("--graph", help="file with 'parent -> child' lines")
    d.add_argument("--scheme", choices=list(SCHEMES))
    d.add_argument("--T", type=int)
    d.set_defaults(func=cmd_dag_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, dag_mod.QueryError, dag_mod.CycleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
