"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 invariant mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import conjugacy as conj
from . import estimator as est
from . import ode
from .model import (
    CycleParams,
    ParameterError,
    TransitionParams,
    derive_constants,
    invariants_closed_form,
    params_from_dict,
    validate,
)
from .piecewise import CylPoint, hitting_sequence, periodic_orbit_sampler, record_sampler

MODES = ("simulate", "invariants", "conjugacy", "bowen", "historic")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4
log = logging.getLogger("hetcycle")

HISTORIC_DEFAULT = {
    "cycle": {"E1": 1.0, "C1": 1.5, "E2": 1.0, "C2": 1.5, "omega1": 1.0, "omega2": 1.0,
              "period1": 1.0, "period2": 1.0},
    "transition": {"a": 1.0, "b": 0.5, "c": 1.0, "d": 0.5, "s1": 1.0, "s2": 1.0},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str
    config: Path | None
    config2: Path | None
    out: Path
    n: int | None
    tol: float
    seed: int


def _read_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _load_system(path: Path | None, default: dict | None = None):
    if path is None:
        if default is None:
            raise ConfigError("--config is required for this mode")
        data = default
    else:
        data = _read_json(path)
    try:
        cycle, trans = params_from_dict(data, extra_sections=("bowen", "initial"))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    problems = validate(cycle, trans, strict=False)
    if problems:
        raise ConfigError(problems[0])
    return cycle, trans, data


def _initial_point(data: dict, cycle: CycleParams, rng: np.random.Generator) -> CylPoint:
    """Start on Out+(C2) from ``initial`` {offset, theta} or drawn from the seed."""
    init = data.get("initial", {})
    if not isinstance(init, dict):
        raise ConfigError("section 'initial' must be an object")
    unknown = sorted(set(init) - {"offset", "theta"})
    if unknown:
        raise ConfigError(f"unknown field initial.{unknown[0]}")
    R2 = derive_constants(cycle).R2
    offset = float(init.get("offset", rng.uniform(0.05, 0.5) * cycle.eps))
    theta = float(init.get("theta", rng.uniform(0, 2 * math.pi)))
    if not 0 < abs(offset) <= cycle.eps:
        raise ConfigError("field initial.offset must satisfy 0 < |offset| <= eps")
    return CylPoint(R2 + offset, theta, cycle.eps, 2)


def _bowen_params(data: dict) -> ode.BowenParams:
    section = data.get("bowen", {})
    if not isinstance(section, dict):
        raise ConfigError("section 'bowen' must be an object")
    allowed = {f.name for f in fields(ode.BowenParams)}
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown field bowen.{unknown[0]}")
    try:
        return ode.BowenParams(**{k: float(v) for k, v in section.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bowen: {exc}") from exc


def _dump(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def run_simulate(cfg: RunConfig) -> int:
    cycle, trans, data = _load_system(cfg.config)
    p0 = _initial_point(data, cycle, np.random.default_rng(cfg.seed))
    rec = hitting_sequence(p0, cfg.n or 10, cycle, trans)
    (cfg.out / "record.csv").write_text(rec.to_csv())
    (cfg.out / "record.json").write_text(rec.to_json() + "\n")
    log.info("simulate: %d hits, truncated=%s", len(rec), rec.truncated)
    return EXIT_OK


def invariants_report(cycle: CycleParams, trans: TransitionParams, p0: CylPoint, n: int) -> dict:
    """Closed-form invariants next to the estimates from one exact record.

    Periods are not visible in hitting times and are echoed from the
    parameters. The transit combinations are evaluated with the closed-form
    gammas; feeding back the ratio estimates taken from the same legs would
    make the last term vanish identically.
    """
    rec = hitting_sequence(p0, n, cycle, trans)
    k = derive_constants(cycle)
    angular = est.angular_limits(rec, trans)
    inv = est.invariant_estimates(rec, angular, gammas=(k.gamma1, k.gamma2))
    closed = invariants_closed_form(cycle, trans)
    resolved = inv.resolved()
    estimated = {
        "period1": cycle.period1,
        "period2": cycle.period2,
        "gamma1": angular.gamma1_hat.final,
        "gamma2": angular.gamma2_hat.final,
        "mix1": angular.angular1_hat.final * (1 + k.gamma1),
        "mix2": angular.angular2_hat.final * (1 + k.gamma2),
        "logcomb1": resolved["logcomb1"][1],
        "logcomb2": resolved["logcomb2"][1],
    }
    closed_d = closed.as_dict()
    gaps = {name: abs(estimated[name] - closed_d[name]) for name in closed_d}
    return {
        "closed_form": closed_d,
        "estimated": estimated,
        "gaps": gaps,
        "max_gap": max(gaps.values()),
        "hits": len(rec),
        "logcomb_index": {k: v[0] for k, v in resolved.items()},
    }


def run_invariants(cfg: RunConfig) -> int:
    cycle, trans, data = _load_system(cfg.config)
    p0 = _initial_point(data, cycle, np.random.default_rng(cfg.seed))
    report = invariants_report(cycle, trans, p0, cfg.n or 30)
    report["tolerance"] = cfg.tol
    report["pass"] = report["max_gap"] <= cfg.tol
    _dump(cfg.out / "invariants.json", report)
    return EXIT_OK


def run_conjugacy(cfg: RunConfig) -> int:
    if cfg.config2 is None:
        raise ConfigError("--config2 is required in conjugacy mode")
    cycle_f, trans_f, data = _load_system(cfg.config)
    cycle_g, trans_g, _ = _load_system(cfg.config2)
    P = _initial_point(data, cycle_f, np.random.default_rng(cfg.seed))
    _, report = conj.build_conjugacy(
        conj.System(cycle_f, trans_f), conj.System(cycle_g, trans_g), P, cfg.n or 15, tol=cfg.tol
    )
    (cfg.out / "conjugacy.json").write_text(report.to_json() + "\n")
    log.info("conjugacy: max discrepancy %.3e", report.max)
    return EXIT_OK


def run_bowen(cfg: RunConfig) -> int:
    data = _read_json(cfg.config) if cfg.config is not None else {}
    unknown = sorted(set(data) - {"bowen"})
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]}")
    params = _bowen_params(data)
    floquet = [ode.floquet_estimate(o, params).as_dict() for o in ("C1", "C2")]
    _dump(cfg.out / "floquet.json", floquet)
    rec = ode.bowen_hitting_record(params, n=cfg.n or 20)
    (cfg.out / "record.csv").write_text(rec.to_csv())
    lift = ode.with_clock(rec, "lift")
    ratios = est.ratio_limits(rec)
    spin = est.angular_limits(lift, TransitionParams(1.0, 1.0, 1.0, 1.0))
    report = {
        "clock": rec.meta["clock"],
        "gamma1_hat": ratios.gamma1_hat.final,
        "gamma2_hat": ratios.gamma2_hat.final,
        "delta_hat": ratios.delta_hat.final,
        "angular1_hat_lift_clock": spin.angular1_hat.final,
        "angular2_hat_lift_clock": spin.angular2_hat.final,
        "omega": params.omega,
    }
    # transit legs are only approximately constant in the smooth flow; report by how much
    for name, legs in (("transit_C2_to_C1", rec.legs[1::2]), ("transit_C1_to_C2", rec.legs[2::2])):
        legs = legs[np.isfinite(legs)]
        if legs.size:
            report[name] = {"mean": float(legs.mean()), "min": float(legs.min()), "max": float(legs.max())}
    _dump(cfg.out / "estimator.json", report)
    span = float(rec.meta["lift_times"][0]) + min(200.0, float(rec.meta["lift_times"][-1]))
    tr = ode.integrate(
        "lifted", ode.default_start(), max(span, 1.0), params,
        list(ode.bowen_sections(params).values()), max_step=0.1,
    )
    (cfg.out / "trajectory.csv").write_text(tr.to_csv())
    (cfg.out / "events.csv").write_text(tr.events_csv())
    return EXIT_OK


def run_historic(cfg: RunConfig) -> int:
    cycle, trans, data = _load_system(cfg.config, HISTORIC_DEFAULT)
    p0 = _initial_point(data, cycle, np.random.default_rng(cfg.seed))
    n = max(cfg.n or 8, 8)
    rec = hitting_sequence(p0, n, cycle, trans)
    horizon = float(rec.t[-1])
    series = est.birkhoff_series(record_sampler(rec), est.block1_bump, horizon, horizon / 200_000)
    (cfg.out / "birkhoff.csv").write_text(series.to_csv())
    ref = est.birkhoff_series(periodic_orbit_sampler(1), est.block1_bump, horizon, horizon / 1000)
    after = float(rec.t[min(4, len(rec.t) - 1)])
    _dump(
        cfg.out / "historic.json",
        {"oscillation": series.oscillation(after), "oscillation_C1": ref.oscillation(after),
         "hits": len(rec), "after": after},
    )
    return EXIT_OK


RUNNERS = {
    "simulate": run_simulate,
    "invariants": run_invariants,
    "conjugacy": run_conjugacy,
    "bowen": run_bowen,
    "historic": run_historic,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetcycle", description=__doc__.splitlines()[0])
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--config", type=Path)
    p.add_argument("--config2", type=Path)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    return p


def parse_args(argv: list[str] | None = None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    if ns.n is not None and ns.n < 1:
        raise ConfigError("--n must be >= 1")
    if not ns.tol > 0:
        raise ConfigError("--tol must be > 0")
    return RunConfig(ns.mode, ns.config, ns.config2, ns.out, ns.n, ns.tol, ns.seed)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("HETCYCLE_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = parse_args(argv)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise ConfigError(f"output directory {cfg.out} is not writable")
        return RUNNERS[cfg.mode](cfg)
    except conj.InvariantMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
