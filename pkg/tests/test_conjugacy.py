from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetcycle import conjugacy as cj
from hetcycle.model import CycleParams, TransitionParams, derive_constants, recursion_constant, scaled_system
from hetcycle.piecewise import CylPoint, hitting_sequence

from _systems import (
    angle_gap,
    canonical_theta,
    canonical_theta_odd,
    conjugacy_system,
    random_start,
    random_system,
)

TWO_PI = 2 * math.pi
CYC = CycleParams(E1=1.0, C1=3.0, E2=2.0, C2=4.0, omega1=1.3, omega2=0.7,
                  period1=TWO_PI / 1.3, period2=TWO_PI / 0.7)
TR = TransitionParams(a=0.8, b=0.6, c=1.2, d=0.5, s1=0.3, s2=0.7)
P0 = CylPoint(1.3, 0.4, 1.0, 2)


def record(n=10, p=P0, cycle=CYC, trans=TR):
    return hitting_sequence(p, n, cycle, trans)


class TestJTerms:
    def test_exact_record(self):
        rec = record()
        j = cj.j_terms(rec, CYC, TR)
        T = rec.t[2::2] - rec.t[:-2:2]
        assert np.all(np.abs(j.values) <= 1e-12 * np.maximum(1.0, 6 * T[:-1]))
        assert not j.degenerate

    def test_too_short(self):
        with pytest.raises(ValueError):
            cj.j_terms(record(n=2), CYC, TR)

    @pytest.mark.parametrize("k", [2, 3])
    def test_single_perturbation(self, k):
        rec = record()
        eta = 1e-3
        t = rec.t.copy()
        t[2 * k] += eta
        base = cj.j_terms(rec, CYC, TR).values
        moved = cj.j_terms(rec.with_times(t), CYC, TR).values - base
        delta = derive_constants(CYC).delta
        expected = np.zeros_like(moved)
        # J_i lives at index i - 1
        expected[k - 2] = eta
        expected[k - 1] = -(1 + delta) * eta
        expected[k] = delta * eta
        assert np.allclose(moved, expected, atol=1e-9)

    def test_degenerate_flag(self):
        c = CycleParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        rec = hitting_sequence(CylPoint(1 / TWO_PI + 0.5, 0.0, 1.0, 2), 5, c, TR)
        j = cj.j_terms(rec, c, TR)
        assert j.degenerate and math.isnan(j.scaled_sum)
        assert j.weighted_sum >= 0


class TestAdjustedTimes:
    def test_identity_on_exact_records(self):
        rec = record()
        at = cj.adjusted_times(rec, CYC, TR)
        m = len(at.ttilde)
        assert np.allclose(at.ttilde, rec.t[:m], rtol=1e-13, atol=1e-12)
        assert at.anchor_offset(rec) == pytest.approx(0.0, abs=1e-12 * rec.t[-1])

    def test_recursion_and_odd_identities(self):
        at = cj.adjusted_times(record(), CYC, TR)
        k = derive_constants(CYC)
        K = recursion_constant(CYC, TR)
        tt = at.ttilde
        T = tt[2::2] - tt[:-2:2]
        scale = np.maximum(1.0, T[1:])
        assert np.all(np.abs(T[1:] - k.delta * T[:-1] - K) <= 1e-9 * scale)
        lhs = (tt[2::2] - tt[1::2]) - k.gamma1 * (tt[1::2] - tt[:-2:2])
        rhs = -math.log(TR.b) / CYC.E2 + (TR.s2 - k.gamma1 * TR.s1)
        assert np.all(np.abs(lhs - rhs) <= 1e-9 * np.maximum(1.0, tt[2::2]))

    def test_requires_delta_above_one(self):
        c = CycleParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        rec = hitting_sequence(CylPoint(1 / TWO_PI + 0.5, 0.0, 1.0, 2), 5, c, TR)
        with pytest.raises(cj.DegenerateRecursionError, match="requires delta > 1"):
            cj.adjusted_times(rec, c, TR)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_summable_perturbation_is_removed(self, seed):
        rng = np.random.default_rng(seed)
        cycle, trans = random_system(rng)
        rec = hitting_sequence(random_start(rng, cycle), 12, cycle, trans)
        eta = rng.uniform(-0.3, 0.3, size=len(rec.t)) * 0.5 ** np.arange(len(rec.t))
        eta[0] = 0.0
        at = cj.adjusted_times(rec.with_times(rec.t + eta), cycle, trans)
        m = len(at.ttilde)
        scale = np.maximum(1.0, rec.t[:m])
        assert np.all(np.abs(at.ttilde - rec.t[:m]) <= 1e-9 * scale)
        T = (rec.t + eta)[2::2] - (rec.t + eta)[:-2:2]
        assert abs(T[-1] - at.Ttilde[-1]) < 1e-2

    def test_partial_limits_converge(self):
        rec = record()
        t = rec.t.copy()
        t[4] += 0.01
        at = cj.adjusted_times(rec.with_times(t), CYC, TR)
        gaps = np.abs(np.diff(at.T0_partial))
        assert gaps[-1] < 1e-12 and at.terms_used >= 2


class TestRecoverPoint:
    def test_radial_inversion(self):
        c = CycleParams(1.0, 2.0, 1.0, 2.0, 1.0, 1.0, TWO_PI, TWO_PI)
        tr = TransitionParams(1.0, 1.0, 1.0, 1.0)
        q = cj.recover_point(np.array([0.0, 1.0, 2.0, 3.0]), c, tr)
        assert q.rho - 1.0 == pytest.approx(math.exp(-1))

    def test_offset_too_large(self):
        with pytest.raises(cj.RecoveryError, match="exceeds section width"):
            cj.recover_point(np.array([0.0, 0.2, 1.0, 2.0]), CYC, TR)

    def test_branch(self):
        at = cj.adjusted_times(record(), CYC, TR)
        assert cj.recover_point(at, CYC, TR, branch=-1).rho < derive_constants(CYC).R2

    def test_round_trip_a_not_one(self):
        theta = canonical_theta(P0, CYC, TR)
        P = CylPoint(P0.rho, theta, 1.0, 2)
        Q = cj.recover_point(cj.adjusted_times(record(p=P), CYC, TR), CYC, TR)
        assert Q.rho == pytest.approx(P.rho, abs=1e-8)
        assert angle_gap(Q.theta, P.theta) < 1e-6

    def test_round_trip_a_one(self):
        tr = TransitionParams(1.0, 0.6, 1.4, 0.5, 0.3, 0.7)
        theta = canonical_theta_odd(P0, CYC, tr)
        P = CylPoint(P0.rho, theta, 1.0, 2)
        Q = cj.recover_point(cj.adjusted_times(record(p=P, trans=tr), CYC, tr), CYC, tr)
        assert Q.rho == pytest.approx(P.rho, abs=1e-8)
        assert angle_gap(Q.theta, P.theta) < 1e-6

    def test_free_angle_when_a_c_one(self):
        tr = TransitionParams(1.0, 0.6, 1.0, 0.5, 0.3, 0.7)
        at = cj.adjusted_times(record(trans=tr), CYC, tr)
        q1 = cj.recover_point(at, CYC, tr, theta_fallback=0.0)
        q2 = cj.recover_point(at, CYC, tr, theta_fallback=2.0)
        assert (q1.theta, q2.theta) == (0.0, 2.0)
        t1 = hitting_sequence(q1, 6, CYC, tr).t
        t2 = hitting_sequence(q2, 6, CYC, tr).t
        assert np.allclose(t1, t2, rtol=1e-12, atol=1e-9)


class TestBuildConjugacy:
    def test_self(self):
        f = cj.System(CYC, TR)
        Q, rep = cj.build_conjugacy(f, f, P0, 15)
        assert rep.max <= 1e-9 * max(1.0, hitting_sequence(P0, 8, CYC, TR).t[15])
        assert Q.rho == pytest.approx(P0.rho, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_scaling_family(self, seed):
        rng = np.random.default_rng(seed)
        cycle, trans = conjugacy_system(rng)
        g = scaled_system(cycle, trans, 1.7, 0.6)
        _, rep = cj.build_conjugacy(cj.System(cycle, trans), cj.System(*g), random_start(rng, cycle), 15)
        assert rep.passed and len(rep.discrepancies) == 16

    def test_mismatch_names_field(self):
        g = TransitionParams(TR.a, TR.b, TR.c, 0.25, TR.s1, TR.s2)
        with pytest.raises(cj.InvariantMismatchError, match="logcomb1") as info:
            cj.build_conjugacy(cj.System(CYC, TR), cj.System(CYC, g), P0, 5)
        assert set(info.value.fields) == {"logcomb1"}

    def test_angular_multipliers_guard(self):
        g = TransitionParams(1.1, TR.b, TR.c, TR.d, TR.s1, TR.s2)
        with pytest.raises(ValueError, match="require_same_ac"):
            cj.build_conjugacy(cj.System(CYC, TR), cj.System(CYC, g), P0, 5)
        _, rep = cj.build_conjugacy(cj.System(CYC, TR), cj.System(CYC, g), P0, 5, require_same_ac=False)
        assert rep.discrepancies.size == 6

    def test_degenerate(self):
        c = CycleParams(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
        f = cj.System(c, TR)
        with pytest.raises(cj.DegenerateRecursionError):
            cj.build_conjugacy(f, f, CylPoint(1 / TWO_PI + 0.5, 0.0, 1.0, 2), 5)

    def test_report_json(self):
        f = cj.System(CYC, TR)
        _, rep = cj.build_conjugacy(f, f, P0, 6)
        doc = json.loads(rep.to_json())
        assert set(doc) == {"Q", "discrepancies", "max", "pass", "tolerance"}
        assert set(doc["Q"]) == {"rho", "theta", "z", "block"}
        assert all(d >= 0 for d in doc["discrepancies"]) and doc["pass"] is True
