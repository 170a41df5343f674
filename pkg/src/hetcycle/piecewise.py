"""Exact piecewise model of the cycle.

Inside each isolating block the flow is the linear one in cylindrical
coordinates (rho, theta, z); between blocks the global maps are linear and
take a constant transit time. Angles are kept unwrapped throughout.

Radial offsets shrink super-exponentially along a record (roughly like
x**(delta**i)), so :func:`hitting_sequence` iterates the logarithm of the
offset instead of the offset itself. Hit points keep a presentation value of
``rho`` that may round to R_j, while ``log_offset`` stays exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .model import CycleParams, DerivedConstants, TransitionParams, derive_constants

_WALL_TOL = 1e-9


class StableManifoldError(ValueError):
    """The point sits on (or below) the local stable manifold and never exits upward."""


class UnstableManifoldError(ValueError):
    """The point sits on the local unstable manifold; the dwell time is infinite."""


@dataclass(frozen=True)
class CylPoint:
    """A point in the cylindrical chart of block ``block`` (1 or 2)."""

    rho: float
    theta: float
    z: float
    block: int

    def offset(self, derived: DerivedConstants) -> float:
        """Signed radial offset k = rho - R_j."""
        return self.rho - _radius(self.block, derived)


@dataclass(frozen=True)
class SectionGeometry:
    """Isolating block V_j and its boundary pieces for one orbit.

    In(C_j) are the two walls rho = R_j +- eps, Out(C_j) the two annuli
    z = +-eps, Delta(C_j) the four corner circles where they meet. The
    positive pieces In+ (rho = R_j + eps) and Out+ (z = eps) carry the
    dynamics modelled here; Out+ meets the unstable manifold on rho = R_j.
    """

    block: int
    R: float
    eps: float

    @classmethod
    def of(cls, block: int, cycle: CycleParams, derived: DerivedConstants | None = None):
        derived = derived or derive_constants(cycle)
        return cls(block, _radius(block, derived), cycle.eps)

    def in_block(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return (
            p.block == self.block
            and abs(p.rho - self.R) <= self.eps * (1 + tol)
            and abs(p.z) <= self.eps * (1 + tol)
        )

    def on_in(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.in_block(p, tol) and abs(abs(p.rho - self.R) - self.eps) <= tol * self.eps

    def on_in_plus(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.in_block(p, tol) and abs(p.rho - self.R - self.eps) <= tol * self.eps

    def on_out(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.in_block(p, tol) and abs(abs(p.z) - self.eps) <= tol * self.eps

    def on_out_plus(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.in_block(p, tol) and abs(p.z - self.eps) <= tol * self.eps

    def on_corner(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.on_in(p, tol) and self.on_out(p, tol)

    def on_unstable_trace(self, p: CylPoint, tol: float = _WALL_TOL) -> bool:
        return self.on_out(p, tol) and abs(p.rho - self.R) <= tol * self.eps


def _radius(block: int, derived: DerivedConstants) -> float:
    if block == 1:
        return derived.R1
    if block == 2:
        return derived.R2
    raise ValueError(f"block must be 1 or 2, got {block!r}")


def _rates(j: int, cycle: CycleParams) -> tuple[float, float, float]:
    if j == 1:
        return cycle.E1, cycle.C1, cycle.omega1
    if j == 2:
        return cycle.E2, cycle.C2, cycle.omega2
    raise ValueError(f"block must be 1 or 2, got {j!r}")


def local_flow(
    j: int, p: CylPoint, t: float, cycle: CycleParams, derived: DerivedConstants | None = None
) -> CylPoint:
    """Flow of the linearised field around C_j for time ``t`` (any sign)."""
    derived = derived or derive_constants(cycle)
    E, C, omega = _rates(j, cycle)
    R = _radius(j, derived)
    return CylPoint(
        rho=R + (p.rho - R) * math.exp(-C * t),
        theta=p.theta + omega * t,
        z=p.z * math.exp(E * t),
        block=j,
    )


def local_map(
    j: int, p: CylPoint, cycle: CycleParams, derived: DerivedConstants | None = None
) -> tuple[CylPoint, float]:
    """Map a point of the wall In(C_j) with z > 0 to Out+(C_j).

    Returns the exit point and the dwell time. Points on the outer wall
    (rho = R_j + eps) exit outside the unstable cylinder, points on the inner
    wall exit inside it.
    """
    derived = derived or derive_constants(cycle)
    E, C, omega = _rates(j, cycle)
    R, eps = _radius(j, derived), cycle.eps
    side = 1.0 if p.rho >= R else -1.0
    if abs(abs(p.rho - R) - eps) > _WALL_TOL * max(1.0, eps):
        raise ValueError(f"point is not on In(C{j}): |rho - R| = {abs(p.rho - R)!r}, eps = {eps!r}")
    if not p.z > 0:
        raise StableManifoldError("point on or below local stable manifold: never exits upward")
    if p.z > eps * (1 + _WALL_TOL):
        raise ValueError(f"z = {p.z!r} lies above the block (eps = {eps!r})")
    log_u = math.log(p.z / eps)
    dwell = -log_u / E
    exit_point = CylPoint(
        rho=R + side * eps * math.exp((C / E) * log_u),
        theta=p.theta - (omega / E) * log_u,
        z=eps,
        block=j,
    )
    return exit_point, dwell


def transition(
    from_block: int,
    p: CylPoint,
    cycle: CycleParams,
    trans: TransitionParams,
    derived: DerivedConstants | None = None,
) -> CylPoint:
    """Linear global map from Out+ of ``from_block`` to In+ of the other block.

    The returned z is signed: z < 0 means the point lies on the other side of
    the target's stable manifold and the caller has to mirror it.
    """
    derived = derived or derive_constants(cycle)
    eps = cycle.eps
    if from_block == 1:
        return CylPoint(derived.R2 + eps, trans.a * p.theta, trans.b * (p.rho - derived.R1), 2)
    if from_block == 2:
        return CylPoint(derived.R1 + eps, trans.c * p.theta, trans.d * (p.rho - derived.R2), 1)
    raise ValueError(f"block must be 1 or 2, got {from_block!r}")


def mirror_entry(p: CylPoint, derived: DerivedConstants, eps: float) -> CylPoint:
    """Send a transition image with z < 0 to the inner wall with z > 0."""
    if p.z >= 0:
        return p
    R = _radius(p.block, derived)
    return CylPoint(R - eps, p.theta, -p.z, p.block)


def compose_return(
    p: CylPoint, cycle: CycleParams, trans: TransitionParams, derived: DerivedConstants | None = None
) -> CylPoint:
    """First return to In(C2) by explicit composition of the four maps."""
    derived = derived or derive_constants(cycle)
    out2, _ = local_map(2, p, cycle, derived)
    in1 = mirror_entry(transition(2, out2, cycle, trans, derived), derived, cycle.eps)
    out1, _ = local_map(1, in1, cycle, derived)
    return mirror_entry(transition(1, out1, cycle, trans, derived), derived, cycle.eps)


def first_return(
    p: CylPoint, cycle: CycleParams, trans: TransitionParams, derived: DerivedConstants | None = None
) -> CylPoint:
    """Closed-form first return map In(C2) -> In(C2).

    Z = b eps d**delta1 (z/eps)**delta and
    Theta = a c theta - [(a c omega2 E1 + a omega1 C2)/(E1 E2)] log(z/eps) - (a omega1/E1) log d.
    The point keeps its side of the unstable cylinder.
    """
    derived = derived or derive_constants(cycle)
    if not p.z > 0:
        raise StableManifoldError("point on or below local stable manifold: never exits upward")
    E1, E2 = cycle.E1, cycle.E2
    a, b, c, d = trans.a, trans.b, trans.c, trans.d
    eps = cycle.eps
    log_u = math.log(p.z / eps)
    Z = b * eps * d**derived.delta1 * math.exp(derived.delta * log_u)
    Theta = (
        a * c * p.theta
        - ((a * c * cycle.omega2 * E1 + a * cycle.omega1 * cycle.C2) / (E1 * E2)) * log_u
        - (a * cycle.omega1 / E1) * math.log(d)
    )
    return CylPoint(p.rho, Theta, Z, 2)


# -- hitting records --------------------------------------------------------

RECORD_FIELDS = ("i", "t", "rho", "theta_unwrapped", "z", "block", "leg_time", "branch")


@dataclass
class HittingRecord:
    """Successive hits of one trajectory with Out+(C2), Out+(C1), Out+(C2), ...

    Index 0 is the starting point on Out+(C2) at t = 0. ``legs[k]`` is the
    transit time used between hit k-1 and hit k and ``dwell[k]`` the time
    spent inside the block on that step (both 0 at k = 0). ``log_offset``
    holds log(|rho - R_j| / eps), the exact radial data.
    """

    t: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    block: np.ndarray
    legs: np.ndarray
    branch: np.ndarray
    dwell: np.ndarray | None = None
    log_offset: np.ndarray | None = None
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def points(self) -> list[CylPoint]:
        return [
            CylPoint(float(r), float(th), float(z), int(b))
            for r, th, z, b in zip(self.rho, self.theta, self.z, self.block)
        ]

    def rows(self) -> Iterator[dict]:
        for i in range(len(self)):
            yield {
                "i": i,
                "t": float(self.t[i]),
                "rho": float(self.rho[i]),
                "theta_unwrapped": float(self.theta[i]),
                "z": float(self.z[i]),
                "block": int(self.block[i]),
                "leg_time": float(self.legs[i]),
                "branch": int(self.branch[i]),
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {name: [] for name in RECORD_FIELDS}
        for row in self.rows():
            for name in RECORD_FIELDS:
                doc[name].append(row[name])
        doc["truncated"] = self.truncated
        return json.dumps(doc, indent=1, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> HittingRecord:
        doc = json.loads(text)
        return cls(
            t=np.asarray(doc["t"], dtype=float),
            rho=np.asarray(doc["rho"], dtype=float),
            theta=np.asarray(doc["theta_unwrapped"], dtype=float),
            z=np.asarray(doc["z"], dtype=float),
            block=np.asarray(doc["block"], dtype=int),
            legs=np.asarray(doc["leg_time"], dtype=float),
            branch=np.asarray(doc["branch"], dtype=int),
            truncated=bool(doc.get("truncated", False)),
        )

    def with_times(self, t: np.ndarray) -> HittingRecord:
        """Copy with the time column replaced (used for perturbation studies)."""
        t = np.asarray(t, dtype=float)
        if t.shape != self.t.shape:
            raise ValueError("time array has the wrong length")
        return HittingRecord(
            t=t.copy(), rho=self.rho, theta=self.theta, z=self.z, block=self.block,
            legs=self.legs, branch=self.branch, dwell=self.dwell,
            log_offset=self.log_offset, truncated=self.truncated, meta=dict(self.meta),
        )


def hitting_sequence(
    p0: CylPoint,
    n: int,
    cycle: CycleParams,
    trans: TransitionParams,
    derived: DerivedConstants | None = None,
) -> HittingRecord:
    """Follow ``n`` full returns (2n hits) starting from ``p0`` on Out+(C2)."""
    derived = derived or derive_constants(cycle)
    eps = cycle.eps
    if p0.block != 2 or abs(p0.z - eps) > _WALL_TOL * max(1.0, eps):
        raise ValueError("p0 must lie on Out+(C2): block 2 with z = eps")
    k = p0.rho - derived.R2
    if k == 0:
        raise UnstableManifoldError("initial point on unstable manifold of C2: infinite dwell")
    if abs(k) > eps * (1 + _WALL_TOL):
        raise ValueError(f"|rho0 - R2| = {abs(k)!r} exceeds the section width {eps!r}")
    return hitting_sequence_from_offset(
        math.copysign(1.0, k), math.log(abs(k) / eps), p0.theta, n, cycle, trans, derived
    )


def hitting_sequence_from_offset(
    branch: float,
    log_offset0: float,
    theta0: float,
    n: int,
    cycle: CycleParams,
    trans: TransitionParams,
    derived: DerivedConstants | None = None,
) -> HittingRecord:
    """Same as :func:`hitting_sequence` with the start given as log(|rho0 - R2|/eps).

    Lets callers start arbitrarily close to the unstable manifold.
    """
    derived = derived or derive_constants(cycle)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not log_offset0 <= 0:
        raise ValueError("log offset must be <= 0 (point inside the section)")
    if not math.isfinite(log_offset0):
        raise UnstableManifoldError("initial point on unstable manifold of C2: infinite dwell")
    eps = cycle.eps
    sigma = 1.0 if branch >= 0 else -1.0
    log_d, log_b = math.log(trans.d), math.log(trans.b)
    # (log multiplier, E, delta_j, omega, angle gain, transit, R) for C2->C1 then C1->C2
    legs_spec = (
        (log_d, cycle.E1, derived.delta1, cycle.omega1, trans.c, trans.s1, derived.R1, 1),
        (log_b, cycle.E2, derived.delta2, cycle.omega2, trans.a, trans.s2, derived.R2, 2),
    )
    size = 2 * n + 1
    t = np.zeros(size)
    theta = np.zeros(size)
    ell = np.zeros(size)
    legs = np.zeros(size)
    dwell = np.zeros(size)
    block = np.empty(size, dtype=int)
    t[0], theta[0], ell[0], block[0] = 0.0, theta0, log_offset0, 2
    last = 0
    truncated = False
    for k in range(1, size):
        log_mult, E, delta_j, omega, gain, s, _, blk = legs_spec[(k - 1) % 2]
        log_u = log_mult + float(ell[k - 1])
        dw = -log_u / E
        tk = t[k - 1] + s + dw
        th = gain * theta[k - 1] - (omega / E) * log_u
        lk = delta_j * log_u
        if not (math.isfinite(tk) and math.isfinite(th) and math.isfinite(lk)):
            truncated = True
            break
        t[k], theta[k], ell[k], legs[k], dwell[k], block[k] = tk, th, lk, s, dw, blk
        last = k
    end = last + 1
    t, theta, ell, legs, dwell, block = (arr[:end] for arr in (t, theta, ell, legs, dwell, block))
    R = np.where(block == 1, derived.R1, derived.R2)
    with np.errstate(under="ignore"):
        rho = R + sigma * eps * np.exp(ell)
    return HittingRecord(
        t=t,
        rho=rho,
        theta=theta,
        z=np.full(end, eps),
        block=block,
        legs=legs,
        branch=np.full(end, int(sigma)),
        dwell=dwell,
        log_offset=ell,
        truncated=truncated,
        meta={"source": "piecewise", "returns": n},
    )


@dataclass(frozen=True)
class OrbitSamples:
    """Batch of continuous-time states along a piecewise orbit.

    ``block`` is the block occupied (0 while in transit), ``source`` and
    ``target`` the blocks joined by the current transit and ``fraction`` the
    elapsed share of that transit.
    """

    block: np.ndarray
    source: np.ndarray
    target: np.ndarray
    fraction: np.ndarray


def record_sampler(rec: HittingRecord):
    """Function of an array of times in [t_0, t_last] returning :class:`OrbitSamples`.

    Step k runs from hit k-1 to hit k: first the transit ``legs[k]`` between
    blocks, then ``dwell[k]`` inside block ``block[k]``.
    """
    if rec.dwell is None:
        raise ValueError("record carries no dwell times")
    t = np.asarray(rec.t, dtype=float)
    blocks = np.asarray(rec.block, dtype=int)
    legs = np.asarray(rec.legs, dtype=float)

    def sample(times) -> OrbitSamples:
        times = np.asarray(times, dtype=float)
        if times.size and (times.min() < t[0] or times.max() > t[-1]):
            raise ValueError("sample times outside the recorded span")
        k = np.clip(np.searchsorted(t, times, side="left"), 1, len(t) - 1)
        since = times - t[k - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(legs[k] > 0, since / legs[k], 1.0)
        moving = since < legs[k]
        return OrbitSamples(
            block=np.where(moving, 0, blocks[k]),
            source=blocks[k - 1],
            target=blocks[k],
            fraction=np.clip(frac, 0.0, 1.0),
        )

    return sample


def periodic_orbit_sampler(block: int):
    """Sampler of the trajectory sitting on C_block forever."""

    def sample(times) -> OrbitSamples:
        n = np.shape(times)
        return OrbitSamples(
            block=np.full(n, block),
            source=np.full(n, block),
            target=np.full(n, block),
            fraction=np.ones(n),
        )

    return sample
