"""Invariant and ratio estimates from hitting-time records.

All estimators work on the leg durations of a record: the odd legs
``t[2i+1] - t[2i]`` (transit C2 -> C1 plus the dwell near C1) and the even
legs ``t[2i+2] - t[2i+1]``. Limits are reported as the last sequence term
together with the gap to the previous term; no extrapolation is done.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import CycleParams, TransitionParams, derive_constants, recursion_constant
from .piecewise import HittingRecord


class RecordTooShortError(ValueError):
    pass


class MalformedRecordError(ValueError):
    pass


@dataclass(frozen=True)
class Sequence:
    """An estimate sequence with its starting index and the last Cauchy gap."""

    values: np.ndarray
    start: int

    @property
    def final(self) -> float:
        return float(self.values[-1])

    @property
    def gap(self) -> float:
        if len(self.values) < 2:
            return math.inf
        return float(abs(self.values[-1] - self.values[-2]))

    def at(self, i: int) -> float:
        return float(self.values[i - self.start])

    def last_resolved(self, scale: np.ndarray, limit: float = 1e4) -> tuple[int, float]:
        """(index, value) at the last term whose magnitude ``scale`` is <= limit.

        Differences of large leg times lose absolute precision like
        scale * 2**-52; this picks the latest term still resolved to about
        1e-12. Falls back to the first term.
        """
        scale = np.asarray(scale, dtype=float)[: len(self.values)]
        ok = np.nonzero(scale <= limit)[0]
        k = int(ok[-1]) if ok.size else 0
        return k + self.start, float(self.values[k])

    def gaps(self) -> np.ndarray:
        return np.abs(np.diff(self.values))


@dataclass(frozen=True)
class RatioEstimates:
    gamma1_hat: Sequence
    gamma2_hat: Sequence
    delta_hat: Sequence
    angular1_hat: Sequence | None = None
    angular2_hat: Sequence | None = None

    def summary(self) -> dict[str, float]:
        out = {}
        for name in ("gamma1_hat", "gamma2_hat", "delta_hat", "angular1_hat", "angular2_hat"):
            seq = getattr(self, name)
            if seq is not None:
                out[name] = seq.final
                out[name.replace("_hat", "_gap")] = seq.gap
        return out


@dataclass(frozen=True)
class InvariantEstimates:
    """Limits of the three leg-time identities, evaluated per index i >= 1."""

    logcomb1_hat: Sequence
    logcomb2_hat: Sequence
    combo_hat: Sequence
    ratios: RatioEstimates
    gamma1: float
    gamma2: float
    scale1: np.ndarray | None = None
    scale2: np.ndarray | None = None
    scale3: np.ndarray | None = None

    def resolved(self) -> dict[str, tuple[int, float]]:
        """Latest well-resolved (index, value) of each log-combination sequence."""
        return {
            "logcomb1": self.logcomb1_hat.last_resolved(self.scale1),
            "logcomb2": self.logcomb2_hat.last_resolved(self.scale2),
            "combo": self.combo_hat.last_resolved(self.scale3),
        }

    def combo_from_parts(self) -> np.ndarray:
        """(1 + gamma1) logcomb1 + (1 + gamma2) logcomb2 at each common index."""
        n = min(len(self.logcomb1_hat.values), len(self.logcomb2_hat.values))
        return (1 + self.gamma1) * self.logcomb1_hat.values[:n] + (1 + self.gamma2) * (
            self.logcomb2_hat.values[:n]
        )

    def report(self) -> dict[str, float]:
        out = self.ratios.summary()
        out.update(
            logcomb1_hat=self.logcomb1_hat.final,
            logcomb1_gap=self.logcomb1_hat.gap,
            logcomb2_hat=self.logcomb2_hat.final,
            logcomb2_gap=self.logcomb2_hat.gap,
            combo_hat=self.combo_hat.final,
            combo_gap=self.combo_hat.gap,
        )
        return out

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=1, sort_keys=True)


def _legs(rec: HittingRecord) -> tuple[np.ndarray, np.ndarray]:
    """Odd legs A_i = t[2i+1]-t[2i] and even legs B_i = t[2i+2]-t[2i+1]."""
    t = np.asarray(rec.t, dtype=float)
    dt = np.diff(t)
    return dt[0::2], dt[1::2]


def _require(rec: HittingRecord, hits: int, what: str) -> None:
    if len(rec.t) < hits:
        raise RecordTooShortError(f"{what} needs at least {hits} hits, record has {len(rec.t)}")


@dataclass(frozen=True)
class LegResiduals:
    """Per-index residuals (LHS - RHS) of the three exact leg identities.

    ``scale*`` hold the magnitude of the terms entering each left-hand side,
    the natural yardstick for relative error on long records.
    """

    index: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    scale1: np.ndarray
    scale2: np.ndarray
    scale3: np.ndarray
    rhs: tuple[float, float, float]

    def relative(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.abs(self.r1) / np.maximum(1.0, self.scale1),
            np.abs(self.r2) / np.maximum(1.0, self.scale2),
            np.abs(self.r3) / np.maximum(1.0, self.scale3),
        )

    def max_relative(self) -> float:
        return float(max(np.max(r) for r in self.relative()))


def lemma_residuals(
    rec: HittingRecord, cycle: CycleParams, trans: TransitionParams
) -> LegResiduals:
    """Residuals of the leg identities for every i >= 1 the record supports.

    (1) A_i - gamma2 B_{i-1} = -(1/E1) log d + (s1 - gamma2 s2)
    (2) B_i - gamma1 A_i     = -(1/E2) log b + (s2 - gamma1 s1)
    (3) T_i - delta T_{i-1}  = -tau1 log d - tau2 log b + (s1 + s2)(1 - delta)
    with T_i = t[2i+2] - t[2i].
    """
    _require(rec, 4, "lemma_residuals")
    k = derive_constants(cycle)
    A, B = _legs(rec)
    m = min(len(A), len(B))
    if m < 2:
        raise RecordTooShortError("lemma_residuals needs at least two full returns")
    A, B = A[:m], B[:m]
    T = A + B
    rhs1 = -math.log(trans.d) / cycle.E1 + (trans.s1 - k.gamma2 * trans.s2)
    rhs2 = -math.log(trans.b) / cycle.E2 + (trans.s2 - k.gamma1 * trans.s1)
    rhs3 = recursion_constant(cycle, trans)
    idx = np.arange(1, m)
    r1 = (A[1:] - k.gamma2 * B[:-1]) - rhs1
    r2 = (B[1:] - k.gamma1 * A[1:]) - rhs2
    r3 = (T[1:] - k.delta * T[:-1]) - rhs3
    return LegResiduals(
        index=idx,
        r1=r1,
        r2=r2,
        r3=r3,
        scale1=np.abs(A[1:]) + k.gamma2 * np.abs(B[:-1]),
        scale2=np.abs(B[1:]) + k.gamma1 * np.abs(A[1:]),
        scale3=np.abs(T[1:]) + k.delta * np.abs(T[:-1]),
        rhs=(rhs1, rhs2, rhs3),
    )


def ratio_limits(rec: HittingRecord) -> RatioEstimates:
    """Leg-ratio sequences converging to gamma1, gamma2 and delta."""
    _require(rec, 6, "ratio_limits")
    A, B = _legs(rec)
    m = min(len(A), len(B))
    A, B = A[:m], B[:m]
    if np.any(A <= 0) or np.any(B <= 0):
        raise MalformedRecordError("non-positive time difference in record")
    T = A + B
    return RatioEstimates(
        gamma1_hat=Sequence(B / A, start=0),
        gamma2_hat=Sequence(A[1:] / B[:-1], start=1),
        delta_hat=Sequence(T[1:] / T[:-1], start=1),
    )


def angular_limits(rec: HittingRecord, trans: TransitionParams) -> RatioEstimates:
    """Mean spinning rate inside the blocks over each full return.

    Even sequence over [t_2i, t_2i+2]:
        [(theta_2i+1 - c theta_2i) + (theta_2i+2 - a theta_2i+1)] / (t_2i+2 - t_2i)
    converging to (omega1 + gamma1 omega2)/(1 + gamma1); odd sequence over
    [t_2i-1, t_2i+1] analogously, converging to (omega2 + gamma2 omega1)/(1 + gamma2).
    The angle gained inside each block is isolated by removing the linear
    multiplier of the preceding transition; with a = c = 1 this is simply the
    angle increment.
    """
    _require(rec, 6, "angular_limits")
    ratios = ratio_limits(rec)
    th = np.asarray(rec.theta, dtype=float)
    t = np.asarray(rec.t, dtype=float)
    m = (len(th) - 1) // 2
    # spin inside C1 on step 2i -> 2i+1, inside C2 on step 2i+1 -> 2i+2
    spin1 = th[1 : 2 * m + 1 : 2] - trans.c * th[0 : 2 * m : 2]
    spin2 = th[2 : 2 * m + 1 : 2] - trans.a * th[1 : 2 * m : 2]
    even = (spin1 + spin2) / (t[2 : 2 * m + 1 : 2] - t[0 : 2 * m - 1 : 2])
    odd = (spin2[:-1] + spin1[1:]) / (t[3 : 2 * m + 1 : 2] - t[1 : 2 * m - 1 : 2])
    return RatioEstimates(
        gamma1_hat=ratios.gamma1_hat,
        gamma2_hat=ratios.gamma2_hat,
        delta_hat=ratios.delta_hat,
        angular1_hat=Sequence(even, start=0),
        angular2_hat=Sequence(odd, start=1),
    )


def invariant_estimates(
    rec: HittingRecord,
    ratios: RatioEstimates | None = None,
    gammas: tuple[float, float] | None = None,
) -> InvariantEstimates:
    """Left-hand sides of the three leg identities as sequences in i >= 1.

    ``gammas`` supplies (gamma1, gamma2) directly; otherwise the final values
    of ``ratios`` (computed from the record if missing) are used. delta is
    taken as gamma1 * gamma2.
    """
    _require(rec, 6, "invariant_estimates")
    if ratios is None:
        ratios = ratio_limits(rec)
    if gammas is None:
        g1, g2 = ratios.gamma1_hat.final, ratios.gamma2_hat.final
    else:
        g1, g2 = gammas
    A, B = _legs(rec)
    m = min(len(A), len(B))
    A, B = A[:m], B[:m]
    T = A + B
    return InvariantEstimates(
        logcomb1_hat=Sequence(A[1:] - g2 * B[:-1], start=1),
        logcomb2_hat=Sequence(B[1:] - g1 * A[1:], start=1),
        combo_hat=Sequence(T[1:] - g1 * g2 * T[:-1], start=1),
        ratios=ratios,
        gamma1=g1,
        gamma2=g2,
        scale1=np.abs(A[1:]) + g2 * np.abs(B[:-1]),
        scale2=np.abs(B[1:]) + g1 * np.abs(A[1:]),
        scale3=np.abs(T[1:]) + g1 * g2 * np.abs(T[:-1]),
    )


# -- Birkhoff averages ------------------------------------------------------


@dataclass(frozen=True)
class BirkhoffSeries:
    times: np.ndarray
    averages: np.ndarray

    def oscillation(self, after: float = 0.0) -> float:
        """limsup - liminf of the running averages over samples with t >= after."""
        sel = self.averages[self.times >= after]
        if sel.size == 0:
            raise ValueError("no samples after the requested time")
        return float(sel.max() - sel.min())

    def to_csv(self) -> str:
        lines = ["t,average"]
        lines += [f"{t!r},{a!r}" for t, a in zip(self.times.tolist(), self.averages.tolist())]
        return "\n".join(lines) + "\n"


def birkhoff_series(
    sampler: Callable[[np.ndarray], object],
    observable: Callable[[object], np.ndarray],
    horizon: float,
    step: float,
) -> BirkhoffSeries:
    """Running time averages (1/T) int_0^T G dt by the trapezoid rule.

    ``sampler`` maps an array of times to a batch of states and
    ``observable`` maps that batch to an array of values.
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    n = int(math.ceil(horizon / step))
    times = np.linspace(0.0, horizon, n + 1)
    step = horizon / n
    values = np.asarray(observable(sampler(times)), dtype=float)
    if values.shape != times.shape:
        raise ValueError("observable must return one value per sample time")
    integral = np.concatenate(([0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * step)))
    averages = np.empty_like(times)
    averages[0] = values[0]
    averages[1:] = integral[1:] / times[1:]
    return BirkhoffSeries(times=times[1:], averages=averages[1:])


def block1_bump(samples) -> np.ndarray:
    """1 inside block 1, 0 inside block 2, smoothstep across transits."""
    level = lambda b: (np.asarray(b) == 1).astype(float)  # noqa: E731
    f = np.asarray(samples.fraction, dtype=float)
    s = f * f * (3 - 2 * f)
    moving = level(samples.source) + (level(samples.target) - level(samples.source)) * s
    return np.where(np.asarray(samples.block) == 0, moving, level(samples.block))
