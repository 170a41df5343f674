"""System parameters for an attracting cycle between two periodic orbits.

Holds the per-orbit Floquet data, the linear transition maps, the derived
ratios, and the closed-form conjugacy invariants. Everything here is a pure
function of immutable dataclasses.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping


class ParameterError(ValueError):
    """Raised when a parameter file or mapping is malformed."""


@dataclass(frozen=True)
class CycleParams:
    """Floquet data of the two periodic orbits C1 and C2.

    ``E*`` are expansion rates, ``C*`` contraction rates, ``omega*`` angular
    speeds and ``period*`` minimal periods. ``eps`` is the half-width of the
    isolating blocks.
    """

    E1: float
    C1: float
    E2: float
    C2: float
    omega1: float
    omega2: float
    period1: float
    period2: float
    eps: float = 1.0


@dataclass(frozen=True)
class TransitionParams:
    """Coefficients of the two linear global maps and their transit times.

    ``a, b`` act on (angle, radial offset) along C1 -> C2; ``c, d`` along
    C2 -> C1. ``s1`` is the transit time from Out(C2) to In(C1) and ``s2``
    the one from Out(C1) to In(C2).
    """

    a: float
    b: float
    c: float
    d: float
    s1: float = 0.0
    s2: float = 0.0


@dataclass(frozen=True)
class DerivedConstants:
    R1: float
    R2: float
    gamma1: float
    gamma2: float
    delta1: float
    delta2: float
    delta: float
    tau1: float
    tau2: float


@dataclass(frozen=True)
class InvariantSet:
    """The eight conjugacy invariants.

    ``logcomb1`` and ``logcomb2`` pair the transit times with the ratio that
    the hitting-time identities actually produce, see
    :func:`invariants_closed_form`.
    """

    period1: float
    period2: float
    gamma1: float
    gamma2: float
    mix1: float
    mix2: float
    logcomb1: float
    logcomb2: float

    def combo(self) -> float:
        """Invariant of the two-leg recursion, -tau1 log d - tau2 log b + (s1+s2)(1-delta)."""
        return (1 + self.gamma1) * self.logcomb1 + (1 + self.gamma2) * self.logcomb2

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def differences(self, other: InvariantSet) -> dict[str, float]:
        """Absolute field-wise differences against ``other``."""
        return {
            f.name: abs(getattr(self, f.name) - getattr(other, f.name))
            for f in fields(self)
        }


@dataclass(frozen=True)
class HomoclinicInvariantSet:
    period1: float
    gamma1: float
    omega1: float
    logcomb: float


def validate(cycle: CycleParams, trans: TransitionParams, strict: bool = True) -> list[str]:
    """Return the list of violated hypotheses; an empty list means valid.

    ``strict`` additionally requires C1 > E1 and C2 > E2. The lifted Bowen
    example violates that and is still attracting, hence the flag.
    """
    problems = []
    for name in ("E1", "C1", "E2", "C2", "omega1", "omega2", "period1", "period2", "eps"):
        value = getattr(cycle, name)
        if not (math.isfinite(value) and value > 0):
            problems.append(f"{name} must be > 0")
    for name in ("a", "c"):
        value = getattr(trans, name)
        if not (math.isfinite(value) and value > 0):
            problems.append(f"{name} must be > 0")
    for name in ("b", "d"):
        value = getattr(trans, name)
        if not (math.isfinite(value) and 0 < value <= 1):
            problems.append(f"{name} must lie in (0,1]")
    for name in ("s1", "s2"):
        value = getattr(trans, name)
        if not (math.isfinite(value) and value >= 0):
            problems.append(f"{name} must be >= 0")
    if strict:
        if not cycle.C1 > cycle.E1:
            problems.append("C1>E1 fails")
        if not cycle.C2 > cycle.E2:
            problems.append("C2>E2 fails")
    return problems


def derive_constants(cycle: CycleParams) -> DerivedConstants:
    E1, C1, E2, C2 = cycle.E1, cycle.C1, cycle.E2, cycle.C2
    gamma1 = C1 / E2
    gamma2 = C2 / E1
    delta1 = C1 / E1
    delta2 = C2 / E2
    return DerivedConstants(
        R1=cycle.omega1 * cycle.period1 / (2 * math.pi),
        R2=cycle.omega2 * cycle.period2 / (2 * math.pi),
        gamma1=gamma1,
        gamma2=gamma2,
        delta1=delta1,
        delta2=delta2,
        # gamma1*gamma2 and delta1*delta2 are the same product C1*C2/(E1*E2)
        delta=(C1 * C2) / (E1 * E2),
        tau1=(1 + gamma1) / E1,
        tau2=(1 + gamma2) / E2,
    )


def invariants_closed_form(
    cycle: CycleParams, trans: TransitionParams, form: str = "derived"
) -> InvariantSet:
    """Closed-form invariant set.

    With ``form="derived"`` (the default) the log-combinations are
    ``-(1/E1) log d + (s1 - gamma2 s2)`` and ``-(1/E2) log b + (s2 - gamma1 s1)``,
    which is what the leg-time identities of the model produce and what the
    estimators converge to. ``form="printed"`` swaps the gammas on the transit
    terms; the two agree whenever s1 = s2 = 0 or gamma1 = gamma2.
    """
    k = derive_constants(cycle)
    if form == "derived":
        g_s2, g_s1 = k.gamma2, k.gamma1
    elif form == "printed":
        g_s2, g_s1 = k.gamma1, k.gamma2
    else:
        raise ValueError(f"unknown form {form!r}")
    return InvariantSet(
        period1=cycle.period1,
        period2=cycle.period2,
        gamma1=k.gamma1,
        gamma2=k.gamma2,
        mix1=cycle.omega1 + k.gamma1 * cycle.omega2,
        mix2=cycle.omega2 + k.gamma2 * cycle.omega1,
        logcomb1=-math.log(trans.d) / cycle.E1 + (trans.s1 - g_s2 * trans.s2),
        logcomb2=-math.log(trans.b) / cycle.E2 + (trans.s2 - g_s1 * trans.s1),
    )


def recursion_constant(cycle: CycleParams, trans: TransitionParams) -> float:
    """Constant K of T_i = delta T_{i-1} + K for full-return times."""
    k = derive_constants(cycle)
    return (
        -k.tau1 * math.log(trans.d)
        - k.tau2 * math.log(trans.b)
        + (1 - k.delta) * (trans.s1 + trans.s2)
    )


def homoclinic_invariants(
    E1: float, C1: float, omega1: float, period1: float, b: float, s1: float = 0.0
) -> HomoclinicInvariantSet:
    """Invariants of a homoclinic cycle to a single periodic orbit."""
    gamma1 = C1 / E1
    return HomoclinicInvariantSet(
        period1=period1,
        gamma1=gamma1,
        omega1=omega1,
        logcomb=-math.log(b) / E1 + s1 * (1 - gamma1),
    )


def scaled_system(
    cycle: CycleParams, trans: TransitionParams, lam: float, mu: float
) -> tuple[CycleParams, TransitionParams]:
    """Rescale (E1, C2, d) by lam and (E2, C1, b) by mu.

    Rates are multiplied, the multipliers raised to the power. The invariant
    set is unchanged by construction.
    """
    new_cycle = CycleParams(
        E1=lam * cycle.E1,
        C1=mu * cycle.C1,
        E2=mu * cycle.E2,
        C2=lam * cycle.C2,
        omega1=cycle.omega1,
        omega2=cycle.omega2,
        period1=cycle.period1,
        period2=cycle.period2,
        eps=cycle.eps,
    )
    new_trans = TransitionParams(
        a=trans.a, b=trans.b**mu, c=trans.c, d=trans.d**lam, s1=trans.s1, s2=trans.s2
    )
    return new_cycle, new_trans


# -- JSON parameter files ---------------------------------------------------

_CYCLE_FIELDS = {f.name for f in fields(CycleParams)}
_CYCLE_REQUIRED = _CYCLE_FIELDS - {"eps"}
_TRANS_FIELDS = {f.name for f in fields(TransitionParams)}
_TRANS_REQUIRED = {"a", "b", "c", "d"}


def _section(data: Mapping[str, Any], key: str, allowed: set, required: set) -> dict:
    if key not in data:
        raise ParameterError(f"missing section {key!r}")
    section = data[key]
    if not isinstance(section, Mapping):
        raise ParameterError(f"section {key!r} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ParameterError(f"unknown field {key}.{unknown[0]}")
    missing = sorted(required - set(section))
    if missing:
        raise ParameterError(f"missing field {key}.{missing[0]}")
    out = {}
    for name, value in section.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParameterError(f"field {key}.{name} must be a number")
        out[name] = float(value)
    return out


def params_from_dict(
    data: Mapping[str, Any], extra_sections: tuple[str, ...] = ()
) -> tuple[CycleParams, TransitionParams]:
    """Parse the ``{"cycle": ..., "transition": ...}`` schema.

    Unknown fields are rejected. ``extra_sections`` names top-level keys that
    a caller handles itself (the CLI uses this for ``bowen`` and ``initial``).
    """
    if not isinstance(data, Mapping):
        raise ParameterError("parameter document must be an object")
    unknown = sorted(set(data) - {"cycle", "transition", *extra_sections})
    if unknown:
        raise ParameterError(f"unknown field {unknown[0]}")
    cycle = CycleParams(**_section(data, "cycle", _CYCLE_FIELDS, _CYCLE_REQUIRED))
    trans = TransitionParams(**_section(data, "transition", _TRANS_FIELDS, _TRANS_REQUIRED))
    return cycle, trans


def params_to_dict(cycle: CycleParams, trans: TransitionParams) -> dict[str, dict[str, float]]:
    return {"cycle": asdict(cycle), "transition": asdict(trans)}


def load_params(path: str | Path) -> tuple[CycleParams, TransitionParams]:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"invalid JSON in {path}: {exc}") from exc
    return params_from_dict(data)
