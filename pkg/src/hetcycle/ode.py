"""Bowen's planar example, its dissipative perturbation and the lift by rotation.

Integration is delegated to scipy's embedded Runge-Kutta pairs with dense
output and event location. The lifted flow is integrated together with the
clock ``c`` obeying dc/dtau = 2 r**2, which undoes the time change used to
pass from the perturbed planar field to the half-plane form; hitting records
are reported in that clock by default.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .piecewise import HittingRecord

VARIANTS = ("conservative", "perturbed", "half-plane", "lifted")
_DIM = {"conservative": 2, "perturbed": 2, "half-plane": 2, "lifted": 3}
BLOWUP = 1e8


class IntegrationError(RuntimeError):
    pass


class BasinError(RuntimeError):
    pass


@dataclass(frozen=True)
class BowenParams:
    epsilon_pert: float = 0.1
    omega: float = 2 * math.pi
    eps_hat: float = 0.05
    K: float = 2.0
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not self.epsilon_pert >= 0:
            raise ValueError("epsilon_pert must be >= 0")
        if not self.omega > 0:
            raise ValueError("omega must be > 0")
        if not 0 < self.eps_hat < 1:
            raise ValueError("eps_hat must lie in (0,1)")
        if not self.K > 0:
            raise ValueError("K must be > 0")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")


def first_integral(x, y):
    """v = (x^2/2)(1 - x^2/2) + y^2/2."""
    return 0.5 * x * x * (1 - 0.5 * x * x) + 0.5 * y * y


def _planar_rhs(state, eps: float):
    x, y = state
    return np.array([-y, x - x**3 - eps * y * (first_integral(x, y) - 0.25)])


def rhs(variant: str, state, params: BowenParams | None = None) -> np.ndarray:
    """Vector field of the chosen variant at ``state``.

    ``conservative`` and ``perturbed`` act on (x, y), ``half-plane`` on (x, r)
    with y + 1 = r^2 after multiplying by 2 r^2, ``lifted`` on (x, r1, r2).
    """
    params = params or BowenParams()
    if variant not in _DIM:
        raise ValueError(f"unknown variant {variant!r}")
    state = np.asarray(state, dtype=float)
    if state.shape != (_DIM[variant],):
        raise ValueError(f"variant {variant!r} expects a state of dimension {_DIM[variant]}")
    eps = params.epsilon_pert
    if variant == "conservative":
        return _planar_rhs(state, 0.0)
    if variant == "perturbed":
        return _planar_rhs(state, eps)
    if variant == "half-plane":
        x, r = state
        y = r * r - 1
        v = first_integral(x, y)
        return np.array([2 * r * r * (1 - r * r), r * (x - x**3 - eps * (v - 0.25) * y)])
    return _lifted(state, eps, params.omega)


def _lifted(state, eps: float, omega: float) -> np.ndarray:
    # the squared (r^2 - 1) inside v is what the half-plane form gives
    x, r1, r2 = state[0], state[1], state[2]
    s = r1 * r1 + r2 * r2
    y = s - 1
    F = x - x**3 - eps * y * (first_integral(x, y) - 0.25)
    return np.array([2 * (1 - s) * s, r1 * F - omega * r2, r2 * F + omega * r1])


def lifted_jacobian(state, params: BowenParams | None = None) -> np.ndarray:
    params = params or BowenParams()
    eps, omega = params.epsilon_pert, params.omega
    x, r1, r2 = np.asarray(state, dtype=float)
    s = r1 * r1 + r2 * r2
    y = s - 1
    v = first_integral(x, y)
    F = x - x**3 - eps * y * (v - 0.25)
    Fx = 1 - 3 * x * x - eps * y * (x - x**3)
    Fs = -eps * ((v - 0.25) + y * y)
    dxs = 4 * (1 - 2 * s)
    return np.array(
        [
            [0.0, dxs * r1, dxs * r2],
            [r1 * Fx, F + 2 * r1 * r1 * Fs, 2 * r1 * r2 * Fs - omega],
            [r2 * Fx, 2 * r1 * r2 * Fs + omega, F + 2 * r2 * r2 * Fs],
        ]
    )


# -- lift and projection ----------------------------------------------------


def lift_state(x: float, r: float, theta: float) -> np.ndarray:
    if r < 0:
        raise ValueError("r must be >= 0")
    return np.array([x, r * math.cos(theta), r * math.sin(theta)])


def project_state(state) -> tuple[float, float, float]:
    """(x, r, theta); theta is nan when r1 = r2 = 0."""
    x, r1, r2 = (float(c) for c in state)
    r = math.hypot(r1, r2)
    theta = math.atan2(r2, r1) if r > 0 else math.nan
    return x, r, theta


def planar_to_half_plane(x: float, y: float) -> tuple[float, float]:
    if not y > -1:
        raise ValueError("the half-plane form needs y > -1")
    return x, math.sqrt(1 + y)


# -- sections ---------------------------------------------------------------


@dataclass(frozen=True)
class SectionSpec:
    """Zero set of ``func`` crossed in ``direction`` (+1, -1 or 0 for both).

    ``window`` restricts which crossings count as hits of the section.
    """

    name: str
    func: Callable[[np.ndarray], float]
    direction: int = 0
    window: Callable[[np.ndarray], bool] | None = None

    def accepts(self, state) -> bool:
        return True if self.window is None else bool(self.window(state))


def _r2(state) -> float:
    return float(state[1] ** 2 + state[2] ** 2)


def bowen_sections(params: BowenParams | None = None, lifted: bool = True) -> dict[str, SectionSpec]:
    """Out/In sections of both saddles; lifted names use C1, C2, planar ones P+, P-.

    Out(C1) = {x = 1 - eps_hat, r^2 in [1, 1 + K eps_hat]} is crossed with x
    decreasing; Out(C2) = {x = -1 + eps_hat, r^2 in [1 - K eps_hat, 1]} with x
    increasing. The In sections share the planes and the opposite windows.
    """
    params = params or BowenParams()
    e, K = params.eps_hat, params.K
    hi = 1 - e
    lo = -1 + e

    def plane(c):
        return lambda s: float(s[0] - c)

    if lifted:
        above = lambda s: 1 <= _r2(s) <= 1 + K * e  # noqa: E731
        below = lambda s: 1 - K * e <= _r2(s) <= 1  # noqa: E731
        names = ("Out(C1)", "In(C2)", "Out(C2)", "In(C1)")
    else:
        above = lambda s: 0 <= s[1] <= K * e  # noqa: E731
        below = lambda s: -K * e <= s[1] <= 0  # noqa: E731
        names = ("Out(P+)", "In(P-)", "Out(P-)", "In(P+)")
    return {
        names[0]: SectionSpec(names[0], plane(hi), -1, above),
        names[1]: SectionSpec(names[1], plane(lo), -1, above),
        names[2]: SectionSpec(names[2], plane(lo), +1, below),
        names[3]: SectionSpec(names[3], plane(hi), +1, below),
    }


# -- integration ------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    t: float
    state: np.ndarray
    section: str
    direction: int
    in_window: bool
    clock: float = math.nan


@dataclass
class Trajectory:
    variant: str
    times: np.ndarray
    states: np.ndarray  # shape (n, dim)
    events: list[Event]
    success: bool
    message: str = ""
    clock: np.ndarray | None = None
    dense: object = field(default=None, repr=False)

    def to_csv(self) -> str:
        cols = {"lifted": "x,r1,r2", "half-plane": "x,r"}.get(self.variant, "x,y")
        buf = io.StringIO()
        buf.write(f"t,{cols}\n")
        for t, s in zip(self.times.tolist(), self.states.tolist()):
            buf.write(",".join(repr(v) for v in (t, *s)) + "\n")
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,section,x,r1,r2,direction\n")
        for ev in self.events:
            s = list(ev.state) + [math.nan] * (3 - len(ev.state))
            buf.write(f"{ev.t!r},{ev.section},{s[0]!r},{s[1]!r},{s[2]!r},{ev.direction}\n")
        return buf.getvalue()


def integrate(
    variant: str,
    state0,
    t_end: float,
    params: BowenParams | None = None,
    sections: list[SectionSpec] | tuple[SectionSpec, ...] = (),
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_step: float = math.inf,
    method: str = "DOP853",
    with_clock: bool = False,
    t0: float = 0.0,
    clock0: float = 0.0,
) -> Trajectory:
    """Integrate one trajectory on [t0, t_end] and locate section crossings.

    ``with_clock`` (lifted and half-plane only) carries dc/dt = 2 r^2 along.
    A state leaving the ball of radius 1e8 stops the run with ``success``
    False and the partial trajectory.
    """
    params = params or BowenParams()
    rel_tol = params.rel_tol if rel_tol is None else rel_tol
    abs_tol = params.abs_tol if abs_tol is None else abs_tol
    if not t_end > t0:
        raise ValueError("t_end must be > t0")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValueError("tolerances must be > 0")
    state0 = np.asarray(state0, dtype=float)
    dim = _DIM.get(variant)
    if dim is None:
        raise ValueError(f"unknown variant {variant!r}")
    if state0.shape != (dim,):
        raise ValueError(f"variant {variant!r} expects a state of dimension {dim}")
    if with_clock and variant not in ("lifted", "half-plane"):
        raise ValueError("the clock is only defined for the lifted and half-plane variants")

    if variant == "lifted":
        eps, om = params.epsilon_pert, params.omega

        def base(s):
            return _lifted(s, eps, om)

        def radius2(s):
            return s[1] * s[1] + s[2] * s[2]
    else:

        def base(s):
            return rhs(variant, s, params)

        def radius2(s):
            return s[1] * s[1]

    if with_clock:

        def fun(t, s):
            return np.append(base(s[:dim]), 2 * radius2(s))

        y0 = np.append(state0, clock0)
    else:

        def fun(t, s):
            return base(s)

        y0 = state0

    ev_funcs = []
    for spec in sections:
        g = (lambda spec: lambda t, s: spec.func(s[:dim]))(spec)
        g.direction = spec.direction
        ev_funcs.append(g)

    def blowup(t, s):
        return BLOWUP - float(np.max(np.abs(s[:dim])))

    blowup.terminal = True
    ev_funcs.append(blowup)

    sol = solve_ivp(
        fun,
        (t0, t_end),
        y0,
        method=method,
        rtol=rel_tol,
        atol=abs_tol,
        max_step=max_step,
        events=ev_funcs,
        dense_output=True,
    )
    ok = sol.status == 0 and np.all(np.isfinite(sol.y))
    message = sol.message
    if sol.t_events[-1].size:
        ok = False
        message = "state left the ball of radius 1e8"

    events = []
    for k, spec in enumerate(sections):
        for t, s in zip(sol.t_events[k], sol.y_events[k]):
            direction = spec.direction or _crossing_sign(spec, sol, t, dim)
            events.append(
                Event(
                    t=float(t),
                    state=np.array(s[:dim]),
                    section=spec.name,
                    direction=direction,
                    in_window=spec.accepts(s[:dim]),
                    clock=float(s[dim]) if with_clock else math.nan,
                )
            )
    events.sort(key=lambda ev: ev.t)
    return Trajectory(
        variant=variant,
        times=sol.t,
        states=sol.y[:dim].T.copy(),
        events=events,
        success=bool(ok),
        message=message,
        clock=sol.y[dim].copy() if with_clock else None,
        dense=sol.sol,
    )


def _crossing_sign(spec: SectionSpec, sol, t: float, dim: int) -> int:
    h = 1e-7 * max(1.0, abs(t))
    lo = spec.func(sol.sol(max(sol.t[0], t - h))[:dim])
    hi = spec.func(sol.sol(min(sol.t[-1], t + h))[:dim])
    return 1 if hi > lo else -1


# -- Floquet exponents ------------------------------------------------------


@dataclass(frozen=True)
class FloquetEstimate:
    orbit: str
    expansion: float
    contraction: float
    trivial_log: float
    multipliers: np.ndarray
    period: float

    def as_dict(self) -> dict:
        return {
            "orbit": self.orbit,
            "expansion": self.expansion,
            "contraction": self.contraction,
            "trivial_log": self.trivial_log,
            "multipliers_abs": [float(abs(m)) for m in self.multipliers],
            "period": self.period,
        }


def periodic_orbit_state(orbit: str) -> np.ndarray:
    if orbit not in ("C1", "C2"):
        raise ValueError("orbit must be 'C1' or 'C2'")
    return np.array([1.0 if orbit == "C1" else -1.0, 1.0, 0.0])


def floquet_estimate(orbit: str, params: BowenParams | None = None) -> FloquetEstimate:
    """Nontrivial Floquet exponents of C1 or C2 from the variational equations.

    The monodromy matrix over one period 2 pi / omega is integrated along
    the orbit. Log-moduli are divided by the clock length of one period,
    2 * (2 pi / omega), since r = 1 on the orbit; the result is then in
    the time units of the planar field, where the saddles have eigenvalues
    +-sqrt(2).
    """
    params = params or BowenParams()
    p0 = periodic_orbit_state(orbit)
    period = 2 * math.pi / params.omega

    def fun(t, s):
        x = s[:3]
        M = s[3:].reshape(3, 3)
        return np.concatenate(
            (_lifted(x, params.epsilon_pert, params.omega), (lifted_jacobian(x, params) @ M).ravel())
        )

    y0 = np.concatenate((p0, np.eye(3).ravel()))
    sol = solve_ivp(fun, (0.0, period), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    M = sol.y[3:, -1].reshape(3, 3)
    if sol.status != 0 or not np.all(np.isfinite(M)):
        raise IntegrationError("monodromy matrix non-finite")
    mult = np.linalg.eigvals(M)
    logs = np.log(np.abs(mult))
    order = np.argsort(np.abs(logs))
    trivial = float(logs[order[0]])
    rest = logs[order[1:]]
    scale = 2 * period
    return FloquetEstimate(
        orbit=orbit,
        expansion=float(rest.max() / scale),
        contraction=float(rest.min() / scale),
        trivial_log=trivial,
        multipliers=mult,
        period=period,
    )


# -- hitting records from the smooth flow ------------------------------------


def default_start(v0: float = 0.245) -> np.ndarray:
    """Lifted point over (0, -sqrt(2 v0)), inside the domain bounded by the cycle."""
    if not 0 < v0 < 0.25:
        raise ValueError("v0 must lie in (0, 1/4)")
    y = -math.sqrt(2 * v0)
    return lift_state(0.0, math.sqrt(1 + y), 0.0)


def _unwrap_near(angle: float, guess: float) -> float:
    return angle + 2 * math.pi * round((guess - angle) / (2 * math.pi))


def bowen_hitting_record(
    params: BowenParams | None = None,
    start=None,
    n: int = 20,
    clock: str = "bowen",
    chunk: float = 500.0,
    t_max: float = 2e4,
    max_step: float = 0.1,
) -> HittingRecord:
    """Alternating hits of Out(C2), Out(C1), ... along a lifted trajectory.

    Index 0 is the first Out(C2) hit and sets t = 0. ``clock`` picks the
    time axis: ``"bowen"`` (the planar field's time, c) or ``"lift"``. Both
    are kept in ``meta``. Angles are unwrapped by nearest continuation from
    theta' = omega. Transit legs are measured from each Out hit to the next
    In hit. Raises BasinError when a crossing falls outside its window or the
    orbit does not alternate.
    """
    params = params or BowenParams()
    if clock not in ("bowen", "lift"):
        raise ValueError("clock must be 'bowen' or 'lift'")
    if n < 1:
        raise ValueError("n must be >= 1")
    state = default_start() if start is None else np.asarray(start, dtype=float)
    secs = bowen_sections(params)
    specs = list(secs.values())
    need = 2 * n + 1
    events: list[Event] = []
    t, c = 0.0, 0.0
    while True:
        tr = integrate(
            "lifted", state, t + chunk, params, specs, max_step=max_step, with_clock=True, t0=t, clock0=c
        )
        if not tr.success:
            raise IntegrationError(tr.message)
        events.extend(ev for ev in tr.events if ev.t > t or not events)
        outs = [ev for ev in events if ev.section.startswith("Out")]
        first = next((k for k, ev in enumerate(outs) if ev.section == "Out(C2)"), None)
        if first is not None and len(outs) - first >= need:
            break
        t, c, state = tr.times[-1], tr.clock[-1], tr.states[-1]
        if t >= t_max:
            raise BasinError(f"only {len(outs)} Out hits before t = {t_max}")

    t_first = outs[first].t
    seq = [ev for ev in events if ev.t >= t_first]
    hits, legs, ins = [], [], {}
    last_out = None
    for ev in seq:
        if ev.section.startswith("Out"):
            hits.append(ev)
            last_out = ev
        elif last_out is not None and id(last_out) not in ins:
            ins[id(last_out)] = ev
        if len(hits) == need:
            break
    for k, ev in enumerate(hits):
        expect = "Out(C2)" if k % 2 == 0 else "Out(C1)"
        if ev.section != expect:
            raise BasinError(f"hit {k} is on {ev.section}, expected {expect}")
        if not ev.in_window:
            raise BasinError(f"hit {k} on {ev.section} lies outside the section window")

    tau = np.array([ev.t for ev in hits])
    cl = np.array([ev.clock for ev in hits])
    times = (cl - cl[0]) if clock == "bowen" else (tau - tau[0])
    thetas = []
    for k, ev in enumerate(hits):
        ang = math.atan2(ev.state[2], ev.state[1])
        guess = ang if k == 0 else thetas[-1] + params.omega * (tau[k] - tau[k - 1])
        thetas.append(_unwrap_near(ang, guess))
    r = np.array([math.hypot(ev.state[1], ev.state[2]) for ev in hits])

    legs = np.zeros(need)
    for k in range(1, need):
        entry = ins.get(id(hits[k - 1]))
        if entry is None or entry.t > hits[k].t:
            legs[k] = math.nan
        else:
            legs[k] = (entry.clock - hits[k - 1].clock) if clock == "bowen" else (entry.t - hits[k - 1].t)
    dwell = np.concatenate(([0.0], np.diff(times))) - legs
    dwell[0] = 0.0
    # at an Out hit |r - 1| is the unstable coordinate; the distance to the
    # connection is measured by the energy gap 1/4 - v instead
    gap = np.array([0.25 - first_integral(ev.state[0], ev.state[1] ** 2 + ev.state[2] ** 2 - 1)
                    for ev in hits])
    return HittingRecord(
        t=times,
        rho=r,
        theta=np.array(thetas),
        z=np.full(need, params.eps_hat),
        block=np.array([2 if k % 2 == 0 else 1 for k in range(need)]),
        legs=legs,
        branch=np.sign(r - 1.0),
        dwell=dwell,
        meta={
            "source": "bowen",
            "clock": clock,
            "lift_times": (tau - tau[0]).tolist(),
            "bowen_times": (cl - cl[0]).tolist(),
            "epsilon_pert": params.epsilon_pert,
            "omega": params.omega,
            "eps_hat": params.eps_hat,
            "energy_gap": gap.tolist(),
        },
    )


def with_clock(rec: HittingRecord, clock: str) -> HittingRecord:
    """Same hits on the other time axis (angles unchanged)."""
    key = {"bowen": "bowen_times", "lift": "lift_times"}[clock]
    out = rec.with_times(np.asarray(rec.meta[key], dtype=float))
    return replace(out, meta={**rec.meta, "clock": clock})
