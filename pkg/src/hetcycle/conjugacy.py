"""Recovering orbits from hitting times and conjugating two systems.

A record of f is replaced by adjusted times that satisfy the full-return
recursion T_i = delta T_{i-1} + K exactly. From those times a point Q_P of a
second system g is reconstructed whose own hitting times are the adjusted
ones. When f and g share the invariant set, P -> Q_P is the conjugacy.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    CycleParams,
    TransitionParams,
    derive_constants,
    invariants_closed_form,
    recursion_constant,
)
from .piecewise import CylPoint, HittingRecord, hitting_sequence

# truncation of the series sum J_j / delta**j, relative to max(1, |T_0|)
SERIES_RTOL = 1e-14
INVARIANT_TOL = 1e-12


class InvariantMismatchError(ValueError):
    def __init__(self, fields: dict[str, tuple[float, float]]):
        self.fields = fields
        names = ", ".join(f"{k} ({a!r} vs {b!r})" for k, (a, b) in fields.items())
        super().__init__(f"invariant mismatch in fields: {names}")


class DegenerateRecursionError(ValueError):
    pass


class RecoveryError(ValueError):
    pass


@dataclass(frozen=True)
class System:
    cycle: CycleParams
    trans: TransitionParams


@dataclass(frozen=True)
class JTerms:
    """Deviations J_i = T_i - delta T_{i-1} - K for i = 1, 2, ..."""

    values: np.ndarray
    delta: float

    @property
    def index(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)

    @property
    def weighted_sum(self) -> float:
        """sum_i i |J_i|, the summability diagnostic."""
        return float(np.sum(self.index * np.abs(self.values)))

    @property
    def degenerate(self) -> bool:
        """True when delta <= 1 and the series sum J_i / delta**i is meaningless."""
        return not self.delta > 1

    @property
    def scaled_sum(self) -> float:
        if self.degenerate:
            return math.nan
        return float(np.sum(np.abs(self.values) / self.delta ** self.index.astype(float)))


@dataclass(frozen=True)
class AdjustedTimes:
    ttilde: np.ndarray
    Ttilde: np.ndarray
    T0tilde: float
    T0_partial: np.ndarray  # T0^(i), i = 0, 1, ...
    Jis: np.ndarray
    terms_used: int
    delta: float
    K: float

    def anchor_offset(self, rec: HittingRecord) -> float:
        """t_2i - ttilde_2i at the last even index of the source record."""
        m = min(len(rec.t), len(self.ttilde))
        last_even = (m - 1) // 2 * 2
        return float(rec.t[last_even] - self.ttilde[last_even])


@dataclass(frozen=True)
class ConjugacyReport:
    Q: CylPoint
    discrepancies: np.ndarray
    tolerance: float

    @property
    def max(self) -> float:
        return float(np.max(self.discrepancies)) if self.discrepancies.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max <= self.tolerance

    def to_json(self) -> str:
        doc = {
            "Q": asdict(self.Q),
            "discrepancies": [float(x) for x in self.discrepancies],
            "max": self.max,
            "pass": self.passed,
            "tolerance": self.tolerance,
        }
        return json.dumps(doc, indent=1)


def _full_returns(rec: HittingRecord) -> np.ndarray:
    t = np.asarray(rec.t, dtype=float)
    m = (len(t) - 1) // 2
    return t[2 : 2 * m + 1 : 2] - t[0 : 2 * m - 1 : 2]


def j_terms(rec: HittingRecord, cycle: CycleParams, trans: TransitionParams) -> JTerms:
    if len(rec.t) < 6:
        raise ValueError(f"j_terms needs at least 6 hits, record has {len(rec.t)}")
    T = _full_returns(rec)
    delta = derive_constants(cycle).delta
    K = recursion_constant(cycle, trans)
    return JTerms(values=T[1:] - delta * T[:-1] - K, delta=delta)


def adjusted_times(
    rec: HittingRecord, cycle: CycleParams, trans: TransitionParams
) -> AdjustedTimes:
    """Adjusted hitting times obeying the exact recursions.

    T0 is corrected to the limit T0 + sum_j J_j / delta**j (terms below
    SERIES_RTOL * max(1, |T0|) are dropped), the full-return times are rebuilt
    forward from it, even times are accumulated from 0 and odd times solved
    from the C1 -> C2 leg identity.
    """
    if len(rec.t) < 4:
        raise ValueError(f"adjusted_times needs at least 4 hits, record has {len(rec.t)}")
    k = derive_constants(cycle)
    delta = k.delta
    if not delta > 1:
        raise DegenerateRecursionError("adjusted-time construction requires delta > 1")
    K = recursion_constant(cycle, trans)
    T = _full_returns(rec)
    J = T[1:] - delta * T[:-1] - K
    powers = delta ** np.arange(1, len(J) + 1, dtype=float)
    terms = J / powers
    T0_partial = T[0] + np.concatenate(([0.0], np.cumsum(terms)))
    significant = np.abs(terms) >= SERIES_RTOL * max(1.0, abs(T[0]))
    used = int(np.nonzero(significant)[0][-1] + 1) if significant.any() else 0
    T0tilde = float(T[0] + np.sum(terms[:used]))

    Ttilde = np.empty_like(T)
    Ttilde[0] = T0tilde
    for i in range(1, len(T)):
        Ttilde[i] = delta * Ttilde[i - 1] + K

    m = len(T)
    tt = np.empty(2 * m + 1)
    tt[0::2] = np.concatenate(([0.0], np.cumsum(Ttilde)))
    shift = math.log(trans.b) / cycle.E2 - (trans.s2 - k.gamma1 * trans.s1)
    tt[1::2] = (tt[2::2] + k.gamma1 * tt[0:-1:2] + shift) / (1 + k.gamma1)
    return AdjustedTimes(
        ttilde=tt,
        Ttilde=Ttilde,
        T0tilde=T0tilde,
        T0_partial=T0_partial,
        Jis=J,
        terms_used=used,
        delta=delta,
        K=K,
    )


def canonical_angle(
    ttilde: np.ndarray, cycle: CycleParams, trans: TransitionParams, theta_fallback: float = 0.0
) -> float:
    """Angle theta_0 singled out by the hitting times alone.

    Hitting times never depend on theta_0; the angle is fixed by asking the
    first return to spin at exactly the invariant mean rate:
    theta_2 - c theta_0 = L1 (t_2 - t_0) with L1 = (omega1 + gamma1 omega2)/(1 + gamma1).
    Combined with theta_2 = a c theta_0 + a omega1 (t_1 - s1) + omega2 (t_2 - t_1 - s2)
    this is linear in theta_0 whenever a != 1. For a = 1, c != 1 the odd
    balance theta_3 - a theta_1 = L2 (t_3 - t_1) fixes theta_1 and one leg is
    run backwards. For a = c = 1 every angle works and ``theta_fallback`` is
    returned.
    """
    k = derive_constants(cycle)
    a, c, s1, s2 = trans.a, trans.c, trans.s1, trans.s2
    w1, w2 = cycle.omega1, cycle.omega2
    t0, t1, t2 = ttilde[0], ttilde[1], ttilde[2]
    if abs(a - 1) > 1e-12:
        L1 = (w1 + k.gamma1 * w2) / (1 + k.gamma1)
        rhs = L1 * (t2 - t0) - a * w1 * (t1 - s1) - w2 * (t2 - t1 - s2)
        return rhs / (c * (a - 1))
    if abs(c - 1) > 1e-12:
        if len(ttilde) < 4:
            raise RecoveryError("angle recovery with a = 1 needs four adjusted times")
        t3 = ttilde[3]
        L2 = (w2 + k.gamma2 * w1) / (1 + k.gamma2)
        rhs = L2 * (t3 - t1) - c * w2 * (t2 - t1 - s2) - w1 * (t3 - t2 - s1)
        theta1 = rhs / (a * (c - 1))
        return (theta1 - w1 * (t1 - s1)) / c
    return theta_fallback


def recover_point(
    at: AdjustedTimes | np.ndarray,
    cycle: CycleParams,
    trans: TransitionParams,
    branch: float = 1.0,
    theta_fallback: float = 0.0,
) -> CylPoint:
    """Point of Out+(C2) whose hitting times under (cycle, trans) are ``at``.

    The radial offset follows from t_1 = s1 - (1/E1) log(d |rho_0 - R2| / eps);
    ``branch`` picks the side of the unstable cylinder, which times cannot
    distinguish.
    """
    tt = at.ttilde if isinstance(at, AdjustedTimes) else np.asarray(at, dtype=float)
    k = derive_constants(cycle)
    eps = cycle.eps
    t1 = float(tt[1])
    if not t1 > trans.s1:
        raise RecoveryError("recovered offset exceeds section width (t1 <= s1)")
    offset = eps * math.exp(-cycle.E1 * (t1 - trans.s1)) / trans.d
    if offset > eps * (1 + 1e-12):
        raise RecoveryError(f"recovered offset exceeds section width ({offset!r} > {eps!r})")
    sign = 1.0 if branch >= 0 else -1.0
    theta0 = canonical_angle(tt, cycle, trans, theta_fallback)
    return CylPoint(k.R2 + sign * offset, theta0, eps, 2)


def check_invariants(f: System, g: System, tol: float = INVARIANT_TOL) -> None:
    inv_f = invariants_closed_form(f.cycle, f.trans)
    inv_g = invariants_closed_form(g.cycle, g.trans)
    bad = {}
    for name, diff in inv_f.differences(inv_g).items():
        scale = max(1.0, abs(getattr(inv_f, name)))
        if not diff <= tol * scale:
            bad[name] = (getattr(inv_f, name), getattr(inv_g, name))
    if bad:
        raise InvariantMismatchError(bad)


def build_conjugacy(
    f: System,
    g: System,
    P: CylPoint,
    n: int,
    tol: float = 1e-6,
    record: HittingRecord | None = None,
    require_same_ac: bool = True,
) -> tuple[CylPoint, ConjugacyReport]:
    """Construct Q_P for g and compare its first ``n`` hitting times with the adjusted times of P.

    ``record`` replaces the f-record of P (e.g. with perturbed times). With
    ``require_same_ac`` (default) the angular multipliers a, c of f and g must
    agree; relaxing it is experimental since a, c are not part of the
    invariant set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    check_invariants(f, g)
    delta_f = derive_constants(f.cycle).delta
    delta_g = derive_constants(g.cycle).delta
    if not delta_f > 1:
        raise DegenerateRecursionError("adjusted-time construction requires delta > 1")
    if abs(delta_f - delta_g) > INVARIANT_TOL * delta_f:
        raise InvariantMismatchError({"delta": (delta_f, delta_g)})
    if require_same_ac and (f.trans.a != g.trans.a or f.trans.c != g.trans.c):
        raise ValueError("a, c differ between f and g; pass require_same_ac=False to experiment")
    returns = n // 2 + 2
    if record is None:
        record = hitting_sequence(P, returns, f.cycle, f.trans)
    at = adjusted_times(record, f.cycle, f.trans)
    branch = 1.0 if P.rho >= derive_constants(f.cycle).R2 else -1.0
    Q = recover_point(at, g.cycle, g.trans, branch=branch, theta_fallback=P.theta)
    rec_g = hitting_sequence(Q, returns, g.cycle, g.trans)
    m = min(n + 1, len(rec_g.t), len(at.ttilde))
    disc = np.abs(rec_g.t[:m] - at.ttilde[:m])
    return Q, ConjugacyReport(Q=Q, discrepancies=disc, tolerance=tol)
