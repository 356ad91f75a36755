import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldplasma.errors import GridMismatchError, ParameterError
from coldplasma.geometry import SonicCurve
from coldplasma.operators import (Grid, GridField, _stencils, apply_L,
                                  apply_Lstar, bilinear_sample, field_to_csv,
                                  ghost_fill, green_identity_gap,
                                  riesz_recover, weak_residual, weighted_inner,
                                  weighted_norm)

PARABOLA = SonicCurve.power(2.0, 1.0)


def unit_grid(n):
    return Grid.rectangle(0.0, 1.0, 0.0, 1.0, n, n)


def bump(X, Y, cx=0.5, cy=0.5, r=0.3):
    t2 = ((X - cx) ** 2 + (Y - cy) ** 2) / (r * r)
    return np.where(t2 < 1.0, (1.0 - t2) ** 3, 0.0)


class TestGridBasics:
    def test_cell_centers_off_axis(self):
        g = unit_grid(8)
        assert g.yc.min() > 0.0

    def test_mask_matches_classification(self, default_domain, grid64):
        from coldplasma.geometry import PointClass, classify_point
        X, Y = grid64.centers()
        jj, ii = np.nonzero(grid64.mask)
        rng = np.random.default_rng(0)
        for k in rng.choice(len(jj), size=25, replace=False):
            c = classify_point(default_domain, float(X[jj[k], ii[k]]),
                               float(Y[jj[k], ii[k]]))
            assert c is not PointClass.OUTSIDE

    def test_negative_ymin_rejected(self):
        with pytest.raises(ParameterError):
            Grid.rectangle(0.0, 1.0, -0.5, 1.0, 4, 4)


class TestStencils:
    def test_transpose_exact(self):
        g = unit_grid(9)
        Dx, Dy = _stencils(g)
        rng = np.random.default_rng(1)
        a = rng.normal(size=(9, 9))
        b = rng.normal(size=(9, 9))
        for D in (Dx, Dy):
            assert abs(np.sum(D.apply(a) * b) - np.sum(a * D.apply_t(b))) < 1e-12

    def test_masked_transpose_exact(self, grid64):
        Dx, Dy = _stencils(grid64)
        rng = np.random.default_rng(2)
        a = rng.normal(size=grid64.mask.shape) * grid64.mask
        b = rng.normal(size=grid64.mask.shape) * grid64.mask
        for D in (Dx, Dy):
            assert abs(np.sum(D.apply(a) * b) - np.sum(a * D.apply_t(b))) < 1e-10


class TestApplyL:
    def test_constants_annihilated_at_k0(self):
        g = unit_grid(16)
        u = GridField.from_callable(g, lambda X, Y: (3.0 * np.ones_like(X),
                                                     -2.0 * np.ones_like(X)))
        out = apply_L(u, 0.0, PARABOLA)
        assert np.abs(out.u1).max() == 0.0
        assert np.abs(out.u2).max() == 0.0

    def test_linear_field_analytic(self):
        # u = (x, y): (Lu)1 = (x - sigma) + K x + 1, (Lu)2 = 0
        g = unit_grid(32)
        u = GridField.from_callable(g, lambda X, Y: (X, Y))
        out = apply_L(u, 0.5, PARABOLA)
        X, Y = g.centers()
        expect = (X - Y ** 2) + 0.5 * X + 1.0
        interior = np.zeros_like(g.mask)
        interior[1:-1, 1:-1] = True
        assert np.max(np.abs(out.u1 - expect)[interior]) < 1e-12
        assert np.max(np.abs(out.u2)) < 1e-12

    def test_poly_oracle_second_order_interior(self):
        errs = []
        for n in (32, 64):
            g = unit_grid(n)
            u = GridField.from_callable(g, lambda X, Y: (2 * X + Y, X + 3 * Y ** 3))
            out = apply_L(u, 0.3, PARABOLA)
            X, Y = g.centers()
            f1 = 2 * (X - Y ** 2) + 0.3 * (2 * X + Y) + 9 * Y ** 2
            interior = np.zeros_like(g.mask)
            interior[3:-3, 3:-3] = True
            errs.append(np.max(np.abs(out.u1 - f1)[interior]))
        assert 3.0 <= errs[0] / errs[1] <= 5.0

    def test_k_range_guard(self):
        g = unit_grid(4)
        u = GridField.zeros(g)
        with pytest.raises(ParameterError):
            apply_L(u, 1.5, PARABOLA)

    def test_curl_of_gradient_vanishes(self):
        # second component of L on grad(psi) is the discrete curl
        g = unit_grid(64)

        def grad_psi(X, Y):
            return 2 * X + Y * np.cos(X * Y), X * np.cos(X * Y) + 3 * Y ** 2

        u = GridField.from_callable(g, grad_psi)
        out = apply_L(u, 0.0, PARABOLA)
        interior = np.zeros_like(g.mask)
        interior[3:-3, 3:-3] = True
        assert np.max(np.abs(out.u2[interior])) < 5e-4  # O(h^2) for h = 1/64


class TestApplyLstar:
    def test_constant_at_k1(self):
        g = unit_grid(8)
        w = GridField.from_callable(g, lambda X, Y: (4.0 * np.ones_like(X),
                                                     1.0 * np.ones_like(X)))
        out = apply_Lstar(w, 1.0, PARABOLA)
        assert np.abs(out.u1).max() == 0.0
        assert np.abs(out.u2).max() == 0.0

    def test_polynomial_example(self):
        # w = (y, 0), K = 0: (L*w)1 = y, (L*w)2 = 1 in the interior
        g = unit_grid(32)
        w = GridField.from_callable(g, lambda X, Y: (Y, np.zeros_like(X)))
        out = apply_Lstar(w, 0.0, PARABOLA)
        X, Y = g.centers()
        interior = np.zeros_like(g.mask)
        interior[1:-1, 1:-1] = True
        assert np.max(np.abs(out.u1 - Y)[interior]) < 1e-12
        assert np.max(np.abs(out.u2 - 1.0)[interior]) < 1e-12

    def test_adjointness_compact_support(self):
        gaps = []
        for n in (32, 64):
            g = unit_grid(n)
            X, Y = g.centers()
            B = bump(X, Y, r=0.28)
            u = GridField(g, B * X, B * Y)
            w = GridField(g, B * (X + Y), B * X * Y)
            gap = abs(weighted_inner(u, apply_Lstar(w, 0.3, PARABOLA), "plain")
                      + weighted_inner(apply_L(u, 0.3, PARABOLA), w, "plain"))
            gaps.append(gap)
        assert 2.5 <= gaps[0] / gaps[1] <= 6.0


class TestWeightedNorms:
    def test_star_norm_constant_field(self):
        g = unit_grid(64)
        v = GridField.from_callable(g, lambda X, Y: (np.ones_like(X), np.zeros_like(X)))
        assert weighted_norm(v, "star", PARABOLA) == pytest.approx(1.0, abs=1e-12)

    def test_costar_norm_linear_field(self):
        g = unit_grid(64)
        v = GridField.from_callable(g, lambda X, Y: (Y, np.zeros_like(X)))
        assert weighted_norm(v, "costar", PARABOLA) == pytest.approx(0.5, abs=1e-12)

    def test_zero_field(self):
        g = unit_grid(8)
        z = GridField.zeros(g)
        assert weighted_norm(z, "star", PARABOLA) == 0.0
        assert weighted_norm(z, "costar", PARABOLA) == 0.0

    def test_plain_orthogonal_components(self):
        g = unit_grid(8)
        v = GridField.from_callable(g, lambda X, Y: (np.ones_like(X), np.zeros_like(X)))
        z = GridField.from_callable(g, lambda X, Y: (np.zeros_like(X), np.ones_like(X)))
        assert weighted_inner(v, z, "plain") == 0.0

    def test_grid_mismatch_raises(self):
        v = GridField.zeros(unit_grid(8))
        z = GridField.zeros(unit_grid(8))
        with pytest.raises(GridMismatchError):
            weighted_inner(v, z, "plain")

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_norm_inner_consistency(self, seed):
        g = unit_grid(12)
        rng = np.random.default_rng(seed)
        v = GridField(g, rng.normal(size=(12, 12)), rng.normal(size=(12, 12)))
        for mode in ("star", "costar"):
            n2 = weighted_norm(v, mode, PARABOLA) ** 2
            ip = weighted_inner(v, v, mode, PARABOLA)
            assert abs(n2 - ip) <= 1e-14 * max(1.0, abs(ip))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_inner_symmetry_exact(self, seed):
        g = unit_grid(9)
        rng = np.random.default_rng(seed)
        v = GridField(g, rng.normal(size=(9, 9)), rng.normal(size=(9, 9)))
        z = GridField(g, rng.normal(size=(9, 9)), rng.normal(size=(9, 9)))
        assert weighted_inner(v, z, "star", PARABOLA) == weighted_inner(z, v, "star", PARABOLA)


class TestWeakResidual:
    def test_trivial_zero(self):
        g = unit_grid(8)
        z = GridField.zeros(g)
        assert weak_residual(z, z, z, 0.0, PARABOLA) == 0.0

    def test_adjointness_oracle(self):
        # compactly supported u, w with f = Lu analytically: residual O(h^2)
        vals = []
        for n in (32, 64):
            g = unit_grid(n)
            X, Y = g.centers()
            B = bump(X, Y, r=0.28)
            u = GridField(g, B, B * Y)
            w = GridField(g, B * X, B)
            f = apply_L(u, 0.4, PARABOLA)
            vals.append(abs(weak_residual(u, w, f, 0.4, PARABOLA)))
        assert 2.5 <= vals[0] / vals[1] <= 6.5


class TestGreenIdentity:
    def test_zero_fields(self, default_domain, grid64):
        z = GridField.zeros(grid64)
        assert green_identity_gap(z, z, 0.0, PARABOLA, default_domain) == 0.0

    def test_constant_fields(self, default_domain, grid64):
        u = GridField.from_callable(grid64, lambda X, Y: (np.ones_like(X),
                                                          np.zeros_like(X)))
        w = GridField.from_callable(grid64, lambda X, Y: (np.zeros_like(X),
                                                          np.ones_like(X)))
        gap = green_identity_gap(u, w, 0.0, PARABOLA, default_domain)
        assert gap < 5e-4

    def test_refinement_ratio(self, default_domain):
        gaps = []
        for n in (64, 128):
            g = Grid.from_domain(default_domain, n, n)
            u = GridField.from_callable(g, lambda X, Y: (X ** 2 + Y, X + Y ** 2))
            w = GridField.from_callable(g, lambda X, Y: (X + 2 * Y ** 2, X ** 2 - Y))
            gaps.append(green_identity_gap(u, w, 0.25, PARABOLA, default_domain))
        assert 3.0 <= gaps[0] / gaps[1] <= 5.0


class TestRiesz:
    def test_zero(self):
        g = unit_grid(8)
        out = riesz_recover(GridField.zeros(g), PARABOLA)
        assert np.abs(out.u1).max() == 0.0

    def test_pointwise_algebra(self):
        g = unit_grid(16)
        h = GridField.from_callable(g, lambda X, Y: (2.0 * Y, np.zeros_like(X)))
        out = riesz_recover(h, PARABOLA)
        assert np.max(np.abs(out.u1 + 1.0)) < 1e-14
        assert np.abs(out.u2).max() == 0.0

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_isometry(self, seed):
        g = unit_grid(16)
        rng = np.random.default_rng(seed)
        h = GridField(g, rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
        u = riesz_recover(h, PARABOLA)
        a = weighted_norm(u, "star", PARABOLA)
        b = weighted_norm(h, "costar", PARABOLA)
        assert abs(a - b) <= 1e-13 * b


class TestInterpolation:
    def test_ghost_fill_linear_exact(self):
        g = unit_grid(16)
        X, Y = g.centers()
        mask = g.mask.copy()
        mask[:, -3:] = False
        vals = 2.0 * X + 3.0 * Y
        filled = ghost_fill(vals * mask, mask)
        # extrapolated ring reproduces the linear field
        ring = ~mask
        ring[:, -1] = False  # second ring may be averaged, first ring exact
        assert np.max(np.abs((filled - vals) * ring)[:, :-1]) < 1e-12

    def test_bilinear_on_smooth(self):
        g = unit_grid(32)
        X, Y = g.centers()
        arr = np.sin(2 * X) * np.cos(Y)
        pts = np.array([[0.3, 0.4], [0.51, 0.52], [0.9, 0.1]])
        out = bilinear_sample(g, arr, pts)
        exact = np.sin(2 * pts[:, 0]) * np.cos(pts[:, 1])
        assert np.max(np.abs(out - exact)) < 2e-3


class TestExport:
    def test_csv_header_and_rows(self, grid64):
        f = GridField.from_callable(grid64, lambda X, Y: (X, Y))
        buf = io.StringIO()
        field_to_csv(f, buf, meta={"domain": "abc"})
        lines = buf.getvalue().splitlines()
        assert lines[0].startswith("# {")
        assert lines[1] == "i,j,x,y,u1,u2"
        assert len(lines) == 2 + grid64.n_masked
