"""Command-line front end: solve-ladder, simulate, adoption, finance-wedge, telemetry, all."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adoption import solve_adoption
from .config import (ScenarioConfig, config_hash, default_scenario, derive_seed, dumps_config, load_config,
                     symmetric_benchmark, validate)
from .errors import EstimationError, InsufficientData, LadderError, NoSignChange, UnsupportedPayoff
from .financing import McSettings, solve_levered_equity, tightness_construction, wedge_report
from .ladder import LadderSolution, qvi_check, solve_ladder, value_table
from .simulate import events_to_csv, make_plan, run_batch, run_plan

COMMANDS = ("solve-ladder", "simulate", "adoption", "finance-wedge", "telemetry", "all")
EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 2, 3, 4

log = logging.getLogger("release_ladder")


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _clean(obj):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


class Outputs:
    """Writes artifacts into one directory and remembers their digests."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.files: dict[str, str] = {}
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CliFailure(EXIT_IO, "io", f"cannot create output directory: {exc}") from exc

    def _record(self, name: str) -> None:
        self.files[name] = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()

    def text(self, name: str, content: str) -> None:
        try:
            (self.dir / name).write_text(content)
        except OSError as exc:
            raise CliFailure(EXIT_IO, "io", f"cannot write {name}: {exc}") from exc
        self._record(name)

    def json(self, name: str, obj) -> None:
        self.text(name, dumps_json(obj))

    def csv_rows(self, name: str, header: list[str], rows) -> None:
        lines = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in rows]
        self.text(name, "\n".join(lines) + "\n")

    def via(self, name: str, writer) -> None:
        try:
            writer(self.dir / name)
        except OSError as exc:
            raise CliFailure(EXIT_IO, "io", f"cannot write {name}: {exc}") from exc
        self._record(name)


# -- commands ----------------------------------------------------------------

def _needs_alpha(config: ScenarioConfig) -> bool:
    return any(w.anchor == "alpha" for w in config.windows)


def cmd_solve_ladder(config: ScenarioConfig, out: Outputs, ctx: dict) -> LadderSolution:
    params = symmetric_benchmark() if ctx.get("benchmark") else config.params
    sol = solve_ladder(params)
    body = sol.to_dict()
    body["qvi"] = qvi_check(sol, params).to_dict()
    body["benchmark"] = bool(ctx.get("benchmark"))
    out.json("ladder.json", body)
    out.csv_rows("value_function.csv", ["z", "V", "dV"], value_table(sol))
    return sol


def cmd_adoption(config: ScenarioConfig, out: Outputs, ctx: dict):
    p = config.params
    sol = solve_adoption(p.kappa, p.m_bar, p.r, p.a, p.p)
    out.json("adoption.json", sol.to_dict())
    m_lo = sol.alpha - 2.0 * max(abs(p.m_bar - sol.alpha), 0.1)
    out.csv_rows("adoption_value.csv", ["m", "W", "tau"], sol.table(m_lo))
    return sol


def cmd_simulate(config: ScenarioConfig, out: Outputs, ctx: dict):
    ladder = ctx.get("ladder") or solve_ladder(config.params)
    alpha = math.nan
    if _needs_alpha(config):
        p = config.params
        alpha = solve_adoption(p.kappa, p.m_bar, p.r, p.a, p.p).alpha
    batch = run_batch(config, ladder, alpha, workers=ctx["workers"], backend=ctx.get("backend"))
    out.json("batch.json", batch.to_dict())
    if config.outputs.write_events:
        plan = make_plan(config, ladder, alpha)
        for i in range(min(config.outputs.event_paths, batch.n_paths)):
            path = run_plan(plan, derive_seed(config.sim.base_seed, i), backend=ctx.get("backend"))
            out.via(f"events_0_{i}.csv", lambda target, path=path: events_to_csv(path, target))
    return batch


def cmd_finance_wedge(config: ScenarioConfig, out: Outputs, ctx: dict):
    params, fin = config.params, config.finance
    fb = ctx.get("ladder") or solve_ladder(params)
    if fin.mode == "tight-construction":
        lev = tightness_construction(params, fb)
    else:
        lev = solve_levered_equity(params, fin.mode, first_best=fb)
    n = ctx["paths"] if ctx.get("paths") is not None else fin.n_paths
    mc = McSettings(n_paths=n, horizon=fin.horizon, dt=config.sim.dt, base_seed=config.sim.base_seed,
                    bridge=config.sim.bridge)
    report = wedge_report(params, lev, fb, n, mc=mc)
    out.json("wedge.json", {"mode": fin.mode, "levered": lev.to_dict(), "wedge": report.to_dict()})
    return report


def cmd_telemetry(config: ScenarioConfig, out: Outputs, ctx: dict):
    from .telemetry import signature_estimates
    ladder = ctx.get("ladder") or solve_ladder(config.params)
    estimates, panel = signature_estimates(config, ladder, backend=ctx.get("backend"))
    out.via("panel.csv", panel.to_csv)
    for key, body in estimates.items():
        out.json(f"estimates_{key}.json", body)
    return estimates


def cmd_all(config: ScenarioConfig, out: Outputs, ctx: dict):
    ctx["ladder"] = cmd_solve_ladder(config, out, ctx)
    cmd_simulate(config, out, ctx)
    cmd_adoption(config, out, ctx)
    cmd_finance_wedge(config, out, ctx)
    cmd_telemetry(config, out, ctx)


HANDLERS = {"solve-ladder": cmd_solve_ladder, "simulate": cmd_simulate, "adoption": cmd_adoption,
            "finance-wedge": cmd_finance_wedge, "telemetry": cmd_telemetry, "all": cmd_all}


# -- driver ------------------------------------------------------------------

def _versions() -> dict[str, str]:
    import numba
    import pandas
    import scipy
    import sklearn
    import statsmodels
    return {"release_ladder": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "pandas": pandas.__version__,
            "statsmodels": statsmodels.__version__, "scikit-learn": sklearn.__version__}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="release-ladder", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="scenario INI file; the shipped default scenario when omitted")
        p.add_argument("--out", default=None, help="output directory (overrides [outputs] directory)")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--paths", type=int, default=None, help="path-count override")
        p.add_argument("--workers", type=int, default=None, help="worker threads; outputs do not depend on it")
        p.add_argument("--backend", choices=("numba", "numpy"), default=None,
                       help="simulation kernel; defaults to the environment setting")
        if name == "solve-ladder":
            p.add_argument("--benchmark", action="store_true",
                           help="solve the symmetric equal-cost benchmark instead of the config parameters")
    return parser


def _load(args) -> ScenarioConfig:
    if args.config is None:
        return default_scenario()
    try:
        return load_config(args.config)
    except OSError as exc:
        raise CliFailure(EXIT_IO, "io", f"cannot read config: {exc}") from exc
    except ValueError as exc:
        raise CliFailure(EXIT_CONFIG, "invalid-config", str(exc), violations=[str(exc)]) from exc


def run(args) -> int:
    config = _load(args).with_overrides(n_paths=args.paths, seed=args.seed, workers=args.workers)
    report = validate(config)
    if not report.ok:
        raise CliFailure(EXIT_CONFIG, "invalid-config", "config failed validation", violations=report.violations)
    out = Outputs(Path(args.out if args.out is not None else config.outputs.directory))
    # worker count never changes results, so it is left out of the recorded config
    recorded = replace(config, sim=replace(config.sim, workers=1))
    ctx = {"workers": config.sim.workers, "paths": args.paths, "backend": args.backend,
           "benchmark": getattr(args, "benchmark", False)}
    try:
        HANDLERS[args.command](config, out, ctx)
    except UnsupportedPayoff as exc:
        raise CliFailure(EXIT_CONFIG, "invalid-config", str(exc), violations=[str(exc)]) from exc
    except (LadderError, EstimationError, InsufficientData, NoSignChange) as exc:
        raise CliFailure(EXIT_SOLVER, "solver", f"{type(exc).__name__}: {exc}") from exc
    out.text("config_used.ini", dumps_config(recorded))
    manifest = {"command": args.command, "config_hash": config_hash(recorded), "seed": config.sim.base_seed,
                "n_paths": config.sim.n_paths, "backend": args.backend, "versions": _versions(),
                "outputs": dict(sorted(out.files.items()))}
    out.json("manifest.json", manifest)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except CliFailure as exc:
        body = {"error": exc.kind, "message": str(exc), "exit_code": exc.code, **exc.extra}
        sys.stderr.write(dumps_json(body))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
