import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldplasma.errors import ParameterError, TraceError
from coldplasma.geometry import SonicCurve, build_domain, default_spec
from coldplasma.multiplier import (BoundaryTerms, MultiplierCase, boundary_terms,
                                   certify_lemma4, check_pointwise_bounds,
                                   epsilon_mult_bound, generic_quad_coeffs,
                                   make_test_field, multiplier_eval, quad_coeffs)
from coldplasma.operators import Grid, apply_Lstar, weighted_norm

PARABOLA = SonicCurve.power(2.0, 1.0)


class TestMultiplierCase:
    def test_theorem2_k_range(self):
        MultiplierCase("theorem2", 0.5, 1.0, PARABOLA)
        with pytest.raises(ParameterError):
            MultiplierCase("theorem2", 0.6, 1.0, PARABOLA)

    def test_theorem3_needs_parabola(self):
        with pytest.raises(ParameterError):
            MultiplierCase("theorem3", 0.5, 1.0, SonicCurve.power(2.0, 2.0))

    def test_uniqueness_t2_range(self):
        MultiplierCase("uniqueness_t2", 0.75, 1.0, PARABOLA)
        with pytest.raises(ParameterError):
            MultiplierCase("uniqueness_t2", 0.25, 1.0, PARABOLA)


class TestMultiplierEval:
    def test_theorem2_worked_example(self):
        c = MultiplierCase("theorem2", 0.25, 1.0, PARABOLA)
        a, b, cc, d = multiplier_eval(c, 0.25, 0.5)
        assert a == pytest.approx(0.25 * (0.5 + 0.125 / 3.0), rel=1e-14)
        assert b == -1.25
        assert cc == 0.0
        assert d == a

    def test_theorem3_worked_example(self):
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        a, b, cc, d = multiplier_eval(c, 0.25, 0.5)
        assert (a, b, cc, d) == (0.5, -1.125, 0.0, 0.5)

    def test_origin_degenerate(self):
        for case, K in [("theorem2", 0.3), ("theorem3", 0.8),
                        ("uniqueness_t2", 0.8), ("uniqueness_t3", 0.2)]:
            c = MultiplierCase(case, K, 1.0, PARABOLA)
            a, b, cc, d = multiplier_eval(c, 0.0, 0.0)
            assert a == 0.0
            assert cc == 0.0
            assert d == 0.0

    def test_negative_y_rejected(self):
        c = MultiplierCase("theorem2", 0.0, 1.0, PARABOLA)
        with pytest.raises(ParameterError):
            multiplier_eval(c, 0.1, -0.1)


class TestQuadCoeffs:
    def test_theorem2_worked_example(self):
        c = MultiplierCase("theorem2", 0.25, 1.0, PARABOLA)
        t = quad_coeffs(c, 0.25, 0.5)
        assert t.alpha == pytest.approx(0.625 + 0.0625 * (0.5 + 0.125 / 3.0), rel=1e-13)
        assert t.beta == 0.0
        assert t.gamma == 0.5

    def test_theorem3_worked_example(self):
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        t = quad_coeffs(c, 0.25, 0.5)
        assert t.alpha == pytest.approx(0.3125, rel=1e-14)
        assert t.beta == pytest.approx(0.0625, rel=1e-14)
        assert t.gamma == 0.25

    def test_degenerate_line(self):
        for case, K in [("theorem2", 0.3), ("theorem3", 0.8)]:
            c = MultiplierCase(case, K, 1.0, PARABOLA)
            t = quad_coeffs(c, 0.1, 0.0)
            assert (t.alpha, t.beta, t.gamma) == (0.0, 0.0, 0.0)

    def test_theorem2_beta_identically_zero(self):
        c = MultiplierCase("theorem2", 0.37, 1.3, PARABOLA)
        rng = np.random.default_rng(0)
        x = rng.uniform(-1.0, 1.2, 200)
        y = rng.uniform(0.0, 2.0, 200)
        _, beta, _ = quad_coeffs(c, x, y)
        assert np.all(beta == 0.0)
        _, beta_g, _ = generic_quad_coeffs(c, x, y)
        assert np.max(np.abs(beta_g)) == 0.0

    @given(case=st.sampled_from(["theorem2", "theorem3", "uniqueness_t2",
                                 "uniqueness_t3"]),
           K=st.floats(0.0, 1.0), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_closed_matches_generic(self, case, K, seed):
        lo, hi = {"theorem2": (0.0, 0.5), "theorem3": (0.0, 1.0),
                  "uniqueness_t2": (0.5, 1.0), "uniqueness_t3": (0.0, 1.0)}[case]
        K = lo + (hi - lo) * K
        c = MultiplierCase(case, K, 1.0, PARABOLA)
        rng = np.random.default_rng(seed)
        x = rng.uniform(-1.0, 0.9, 64)
        y = rng.uniform(0.0, 2.0, 64)
        closed = quad_coeffs(c, x, y)
        generic = generic_quad_coeffs(c, x, y)
        for a, b in zip(closed, generic):
            assert np.max(np.abs(a - b) / (1.0 + np.abs(b))) <= 1e-12

    def test_k1_determinant_identity(self):
        # at K = 1 the inequality chain collapses to an equality
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        rng = np.random.default_rng(3)
        x = rng.uniform(-1.0, 0.9, 500)
        y = rng.uniform(0.0, 2.0, 500)
        alpha, beta, gamma = quad_coeffs(c, x, y)
        det = alpha * gamma - beta ** 2
        expect = (y / 2.0) ** 2 * (1.0 - x + 1.75 * y ** 2)
        assert np.max(np.abs(det - expect)) <= 1e-13

    def test_spot_value_eq11(self):
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        t = quad_coeffs(c, 0.25, 0.5)
        assert t.alpha * t.gamma - t.beta ** 2 == pytest.approx(0.07421875, abs=1e-15)

    def test_k_half_parabola_vertex(self):
        ks = np.linspace(0.0, 1.0, 1001)
        vals = (0.5 - ks) * ks
        assert vals.max() == pytest.approx(1.0 / 16.0, abs=1e-12)
        assert ks[np.argmax(vals)] == pytest.approx(0.25, abs=1e-3)


class TestEpsilonMult:
    def test_worked_example(self):
        assert epsilon_mult_bound(-1.0, 1.0, 1.0, 0.1) == \
            pytest.approx(0.980487804878, abs=1e-9)

    def test_small_delta_limit(self):
        assert epsilon_mult_bound(-1.0, 1.0, 1.0, 1e-9) == pytest.approx(1.0, abs=1e-8)

    def test_large_delta_still_in_unit_interval(self):
        v = epsilon_mult_bound(-1.0, 1.0, 1.0, 1.9)
        assert v == pytest.approx(1.0 - 1.9 / 5.125, rel=1e-12)
        assert 0.0 < v < 1.0

    def test_guard(self):
        with pytest.raises(ParameterError):
            epsilon_mult_bound(-1.0, 1.0, 1.0, 2.5)

    @given(p=st.floats(-5.0, -0.1), q=st.floats(0.1, 3.0), ell=st.floats(0.1, 3.0),
           frac=st.floats(0.01, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_always_in_unit_interval(self, p, q, ell, frac):
        delta = frac * (ell - p)
        assert 0.0 < epsilon_mult_bound(p, q, ell, delta) < 1.0


class TestPointwiseBounds:
    @pytest.mark.parametrize("case,K", [("theorem2", 0.0), ("theorem2", 0.25),
                                        ("theorem2", 0.5), ("theorem3", 0.0),
                                        ("theorem3", 0.5), ("theorem3", 1.0),
                                        ("uniqueness_t2", 0.75),
                                        ("uniqueness_t3", 0.5)])
    def test_default_domain_clean(self, default_domain, grid64, case, K):
        c = MultiplierCase(case, K, 1.0, PARABOLA)
        rep = check_pointwise_bounds(c, default_domain, grid64, default_domain.delta)
        assert rep.passed, rep.failures[:3]
        assert rep.n_checked == grid64.n_masked


class TestTestField:
    def test_trace_constraints(self, default_domain, grid64):
        w = make_test_field(default_domain, grid64, seed=0)
        assert np.abs(w.traces["c1"].w1).max() <= 1e-12
        assert np.abs(w.traces["c2"].w1).max() <= 1e-12
        tg = w.traces["gamma"]
        assert np.abs(tg.w1 * tg.dx + tg.w2 * tg.dy).max() <= 1e-10

    def test_vanishes_at_origin(self, default_domain, grid64):
        w = make_test_field(default_domain, grid64, seed=1)
        X, Y = grid64.centers()
        m = grid64.mask
        r2 = X ** 2 + Y ** 2
        near = m & (r2 < (3 * grid64.h) ** 2)
        if near.any():
            assert np.abs(w.field.u1[near]).max() < 1e-2
            assert np.abs(w.field.u2[near]).max() < 1e-2

    def test_costar_norm_finite(self, default_domain, grid64):
        w = make_test_field(default_domain, grid64, seed=2)
        lsw = apply_Lstar(w.field, 0.25, PARABOLA)
        assert math.isfinite(weighted_norm(lsw, "costar", PARABOLA))

    def test_seeds_differ(self, default_domain, grid64):
        w0 = make_test_field(default_domain, grid64, seed=0)
        w1 = make_test_field(default_domain, grid64, seed=1)
        assert np.abs(w0.field.u1 - w1.field.u1).max() > 1e-6


class TestBoundaryTerms:
    def test_zero_field(self, default_domain, grid64):
        w = make_test_field(default_domain, grid64, seed=0)
        import dataclasses
        zero_traces = {}
        for name, t in w.traces.items():
            zero_traces[name] = dataclasses.replace(t, w1=np.zeros_like(t.w1),
                                                    w2=np.zeros_like(t.w2))
        wz = dataclasses.replace(w, traces=zero_traces)
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        bt = boundary_terms(wz, c, default_domain)
        assert (bt.c1, bt.gamma_a, bt.gamma_b, bt.c2) == (0.0, 0.0, 0.0, 0.0)

    def test_signs_and_gamma_vanishing(self, default_domain, grid64):
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        for seed in range(5):
            w = make_test_field(default_domain, grid64, seed=seed)
            bt = boundary_terms(w, c, default_domain)
            assert bt.c1 >= -bt.tol
            assert bt.c2 >= -bt.tol
            assert abs(bt.gamma_a) <= bt.tol
            assert abs(bt.gamma_b) <= bt.tol

    def test_c2_closed_form(self, default_domain, grid64):
        """w = (0, 1) on the vertical chord C2: I2 = 1/2 K int_0^y1 a(y) dy
        with the theorem2 multiplier, by the straight-segment closed form."""
        import dataclasses
        K = 0.25
        c = MultiplierCase("theorem2", K, 1.0, PARABOLA)
        w = make_test_field(default_domain, grid64, seed=0)
        traces = {}
        for name, t in w.traces.items():
            w2 = np.ones_like(t.w2) if name == "c2" else np.zeros_like(t.w2)
            traces[name] = dataclasses.replace(t, w1=np.zeros_like(t.w1), w2=w2)
        wc = dataclasses.replace(w, traces=traces)
        bt = boundary_terms(wc, c, default_domain)
        y1 = default_domain.gamma[-1][1]
        exact = 0.5 * K * (y1 ** 2 / 2.0 + y1 ** 4 / 12.0)
        assert bt.c2 == pytest.approx(exact, rel=1e-4)
        assert bt.c1 == 0.0

    def test_gamma_terms_second_order(self, default_domain):
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        vals = {}
        for n in (64, 128):
            g = Grid.from_domain(default_domain, n, n)
            w = make_test_field(default_domain, g, seed=0)
            vals[n] = boundary_terms(w, c, default_domain)
        ra = abs(vals[64].gamma_a) / abs(vals[128].gamma_a)
        rb = abs(vals[64].gamma_b) / abs(vals[128].gamma_b)
        assert 3.0 <= ra <= 5.0
        assert 3.0 <= rb <= 5.0

    def test_bad_trace_rejected(self, default_domain, grid64):
        import dataclasses
        w = make_test_field(default_domain, grid64, seed=0)
        t = w.traces["c1"]
        bad = dataclasses.replace(t, w1=np.ones_like(t.w1))
        wb = dataclasses.replace(w, traces={**w.traces, "c1": bad})
        c = MultiplierCase("theorem2", 0.0, 1.0, PARABOLA)
        with pytest.raises(TraceError):
            boundary_terms(wb, c, default_domain)


class TestCertify:
    @pytest.mark.parametrize("case,K", [("theorem2", 0.0), ("theorem2", 0.5),
                                        ("theorem3", 1.0)])
    def test_certified_on_default_domain(self, default_domain, grid64, case, K):
        c = MultiplierCase(case, K, 1.0, PARABOLA)
        rep = certify_lemma4(c, default_domain, grid64, n_fields=5, seed=0)
        assert rep.k_cert > 0.0
        assert rep.certified
        assert min(rep.empirical_ratios) >= rep.empirical_floor

    def test_k0_c1_form_analytic_floor(self, default_domain, grid64):
        # with a = 0, lambda_min/sigma' >= min(delta,1)/(2 ell) = 0.05
        c = MultiplierCase("theorem2", 0.0, 1.0, PARABOLA)
        rep = certify_lemma4(c, default_domain, grid64, n_fields=0)
        assert rep.c1_form >= 0.05 - 1e-12
        assert rep.analytic_c1 == pytest.approx(0.05, rel=1e-12)

    def test_uniqueness_case_pointwise_only(self, default_domain, grid64):
        c = MultiplierCase("uniqueness_t3", 0.25, 1.0, PARABOLA)
        rep = certify_lemma4(c, default_domain, grid64, n_fields=20, seed=0)
        assert rep.k_cert > 0.0
        assert rep.empirical_ratios == []
        assert rep.certified

    def test_report_roundtrip(self, default_domain, grid64):
        c = MultiplierCase("theorem2", 0.25, 1.0, PARABOLA)
        rep = certify_lemma4(c, default_domain, grid64, n_fields=3, seed=0)
        d = rep.to_dict()
        assert d["certified"]
        assert d["case"] == "theorem2"
        assert "boundary" in d and "empirical" in d


class TestQuadraticFormConsistency:
    def test_volume_identity(self, default_domain, grid128):
        """Direct quadrature of (L*w, Mw) equals I1 + I2 within the
        calibrated tolerance (validates the product-rule cancellations)."""
        from coldplasma.multiplier import quad_coeffs as qc
        from coldplasma.operators import weighted_inner, GridField
        c = MultiplierCase("theorem3", 1.0, 1.0, PARABOLA)
        g = grid128
        w = make_test_field(default_domain, g, seed=0)
        lsw = apply_Lstar(w.field, c.K, PARABOLA)
        X, Y = g.centers()
        a, b, cc, d = multiplier_eval(c, X, np.maximum(Y, 0.0))
        mw = GridField(g, (a * w.field.u1 + b * w.field.u2) * g.mask,
                       (cc * w.field.u1 + d * w.field.u2) * g.mask)
        I = weighted_inner(lsw, mw, "plain")
        alpha, beta, gamma = qc(c, X[g.mask], Y[g.mask])
        I1 = float(np.sum(alpha * w.field.u1[g.mask] ** 2
                          + 2.0 * beta * w.field.u1[g.mask] * w.field.u2[g.mask]
                          + gamma * w.field.u2[g.mask] ** 2)) * g.cell_area()
        bt = boundary_terms(w, c, default_domain)
        I2 = bt.c1 + bt.gamma_a + bt.gamma_b + bt.c2
        # calibrated on the default domain: observed gap < 0.2 h^2
        assert abs(I - (I1 + I2)) <= 2.0 * g.h ** 2

    def test_lambda_min_nonnegative(self, default_domain, grid64):
        for case, K in [("theorem2", 0.25), ("theorem3", 0.7)]:
            c = MultiplierCase(case, K, 1.0, PARABOLA)
            X, Y = grid64.centers()
            m = grid64.mask
            alpha, beta, gamma = quad_coeffs(c, X[m], Y[m])
            lam = 0.5 * (alpha + gamma) - np.sqrt(
                (0.5 * (alpha - gamma)) ** 2 + beta ** 2)
            assert lam.min() >= -1e-15
            assert np.all(lam[Y[m] > 1e-6] > 0.0)
