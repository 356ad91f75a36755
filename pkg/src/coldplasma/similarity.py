"""Similarity solutions psi = x^nu F(y^2/x) for the parabolic sonic curve.

With sigma(y) = y^2 and mu = y^2/x, separable solutions of the scalar
reduction (x - y^2) psi_xx + psi_yy = 0 lead to the second-order ODE

    (1 - mu) [nu(nu-1) F - 2(nu-1) mu F' + mu^2 F''] + 2 F' + 4 mu F'' = 0,

regular-singular at mu = 0 and at the positive root of mu^2 - mu - 4 = 0,
with far-field exponents F ~ mu^nu or mu^(nu-1).  The solver integrates
inward from a large mu_b seeded on one of those branches and represents F by
dense samples plus a power-law tail for mu > mu_b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DomainError, ParameterError, ResidualError
from .geometry import Domain, SonicCurve
from .operators import GridField, weighted_norm

__all__ = [
    "SING_MU",
    "SimilaritySolution",
    "hypergeo_rhs",
    "indicial_exponents",
    "solve_F",
    "eval_similarity",
    "energy_U",
]

# Interior singular point: positive root of mu^2 - mu - 4 = 0.
SING_MU = (1.0 + math.sqrt(17.0)) / 2.0

BRANCHES = ("mu_pow_nu", "mu_pow_nu_minus_1")


def hypergeo_rhs(nu: float, mu: float, F: float, Fp: float) -> float:
    """F'' from the ODE; raises near the singular points of
    A(mu) = (1 - mu) mu^2 + 4 mu."""
    A = (1.0 - mu) * mu * mu + 4.0 * mu
    if abs(A) < 1e-10:
        raise DegeneracyError(f"ODE singular at mu = {mu} (A = {A:.3e})")
    num = (1.0 - mu) * (nu * (nu - 1.0) * F - 2.0 * (nu - 1.0) * mu * Fp) + 2.0 * Fp
    return -num / A


def indicial_exponents(nu: float) -> tuple[float, float]:
    """Roots of s^2 - (2 nu - 1) s + nu (nu - 1) = 0 at mu -> infinity.

    The discriminant is identically 1, so the roots come out as exactly
    (nu, nu - 1) in floating point as well.
    """
    b = 2.0 * nu - 1.0
    disc = b * b - 4.0 * nu * (nu - 1.0)
    r = math.sqrt(disc)
    return (b + r) / 2.0, (b - r) / 2.0


@dataclass(frozen=True, eq=False)
class SimilaritySolution:
    """Dense samples of (F, F') on [mu_a, mu_b] plus a power tail beyond mu_b.

    Interpolation is quintic Hermite per interval using the ODE-implied F''
    at the nodes, so second derivatives of the interpolant stay accurate.
    """

    nu: float
    branch: str
    s: float
    mu: np.ndarray
    F: np.ndarray
    Fp: np.ndarray
    Fpp: np.ndarray
    step: float
    residual_max: float

    @property
    def mu_a(self) -> float:
        return float(self.mu[0])

    @property
    def mu_b(self) -> float:
        return float(self.mu[-1])

    def _interp(self, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Quintic Hermite values (F, F') inside the sampled interval."""
        idx = np.clip(np.searchsorted(self.mu, mu, side="right") - 1, 0, len(self.mu) - 2)
        h = self.mu[idx + 1] - self.mu[idx]
        t = (mu - self.mu[idx]) / h
        f0, f1 = self.F[idx], self.F[idx + 1]
        d0, d1 = self.Fp[idx] * h, self.Fp[idx + 1] * h
        c0, c1 = self.Fpp[idx] * h * h, self.Fpp[idx + 1] * h * h
        # quintic Hermite basis (value, slope, curvature at both ends)
        t2, t3, t4, t5 = t * t, t ** 3, t ** 4, t ** 5
        h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5
        h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5
        h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5
        h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5
        h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5
        h21 = 0.5 * t3 - t4 + 0.5 * t5
        val = h00 * f0 + h10 * d0 + h20 * c0 + h01 * f1 + h11 * d1 + h21 * c1
        g00 = (-30.0 * t2 + 60.0 * t3 - 30.0 * t4)
        g10 = (1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4)
        g20 = (t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4)
        g01 = (30.0 * t2 - 60.0 * t3 + 30.0 * t4)
        g11 = (-12.0 * t2 + 28.0 * t3 - 15.0 * t4)
        g21 = (1.5 * t2 - 4.0 * t3 + 2.5 * t4)
        deriv = (g00 * f0 + g10 * d0 + g20 * c0 + g01 * f1 + g11 * d1 + g21 * c1) / h
        return val, deriv

    def evaluate(self, mu) -> tuple[np.ndarray, np.ndarray]:
        """(F, F') at mu; power tail beyond mu_b, error below mu_a."""
        arr = np.asarray(mu, float)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        if np.any(arr < self.mu_a - 1e-12):
            raise DomainError(
                f"mu = {float(arr.min())} below the solved interval [{self.mu_a}, {self.mu_b}]")
        inside = arr <= self.mu_b
        F = np.empty_like(arr)
        Fp = np.empty_like(arr)
        if inside.any():
            F[inside], Fp[inside] = self._interp(np.clip(arr[inside], self.mu_a, self.mu_b))
        if (~inside).any():
            tail = arr[~inside]
            F[~inside] = tail ** self.s
            Fp[~inside] = self.s * tail ** (self.s - 1.0)
        if scalar:
            return float(F[0]), float(Fp[0])
        return F, Fp

    def to_rows(self):
        return zip(self.mu.tolist(), self.F.tolist(), self.Fp.tolist())


def _residual_from_samples(nu: float, mu: np.ndarray, F: np.ndarray,
                           step: float) -> float:
    """Relative ODE residual using only the F samples.

    Fourth-order central stencils for F' and F'' at a mu-proportional stride
    r = round(mu/2) samples: power-law solutions make both the stencil
    truncation and the second-difference roundoff uniform in mu this way,
    while the physical spacing still scales with the integration step (so
    halving the step divides the residual by ~16).  Normalized by the local
    magnitude of the ODE's terms.
    """
    n = len(mu)
    if n < 5:
        return 0.0
    i_all = np.arange(n)
    r = np.maximum(1, np.round(0.5 * mu).astype(int))
    ok = (i_all - 2 * r >= 0) & (i_all + 2 * r <= n - 1)
    if not ok.any():
        return 0.0
    i = i_all[ok]
    r = r[ok]
    H = r * step
    d1 = (F[i - 2 * r] - 8.0 * F[i - r] + 8.0 * F[i + r] - F[i + 2 * r]) / (12.0 * H)
    d2 = (-F[i - 2 * r] + 16.0 * F[i - r] - 30.0 * F[i]
          + 16.0 * F[i + r] - F[i + 2 * r]) / (12.0 * H * H)
    m = mu[i]
    t_f = nu * (nu - 1.0) * F[i]
    t_d1 = -2.0 * (nu - 1.0) * m * d1
    t_d2 = m * m * d2
    res = (1.0 - m) * (t_f + t_d1 + t_d2) + 2.0 * d1 + 4.0 * m * d2
    scale = np.abs(1.0 - m) * (np.abs(t_f) + np.abs(t_d1) + np.abs(t_d2)) \
        + np.abs(2.0 * d1) + np.abs(4.0 * m * d2)
    scale = np.maximum(scale, np.abs(F[i]) + 1e-30)
    return float(np.max(np.abs(res) / scale))


def solve_F(nu: float, branch: str, mu_interval: tuple[float, float], step: float,
            residual_tol: float = 1e-8) -> SimilaritySolution:
    """Integrate the ODE inward from mu_b with far-field data F = mu_b^s,
    F' = s mu_b^(s-1) on the chosen branch (s = nu or nu - 1), classical RK4
    at fixed step.  The sampled solution must pass an independent
    finite-difference residual check at interior nodes."""
    if branch not in BRANCHES:
        raise ParameterError(f"unknown branch {branch!r}")
    mu_a, mu_b = float(mu_interval[0]), float(mu_interval[1])
    if not (0.0 < mu_a < mu_b):
        raise ParameterError(f"need 0 < mu_a < mu_b, got {mu_interval}")
    if step <= 0.0:
        raise ParameterError(f"need step > 0, got {step}")
    margin = 10.0 * step
    for sing in (0.0, SING_MU):
        if mu_a - margin < sing < mu_b + margin:
            raise ParameterError(
                f"interval [{mu_a}, {mu_b}] must clear the singular point mu = {sing} "
                f"by at least 10*step = {margin}")
    s = indicial_exponents(nu)[0 if branch == "mu_pow_nu" else 1]

    n = max(2, int(round((mu_b - mu_a) / step)))
    h = (mu_b - mu_a) / n
    mu = mu_b - h * np.arange(n + 1)
    F = np.empty(n + 1)
    Fp = np.empty(n + 1)
    F[0] = mu_b ** s
    Fp[0] = s * mu_b ** (s - 1.0)
    f, fp = F[0], Fp[0]
    for k in range(n):
        m = mu[k]
        k1f, k1p = fp, hypergeo_rhs(nu, m, f, fp)
        k2f = fp - 0.5 * h * k1p
        k2p = hypergeo_rhs(nu, m - 0.5 * h, f - 0.5 * h * k1f, k2f)
        k3f = fp - 0.5 * h * k2p
        k3p = hypergeo_rhs(nu, m - 0.5 * h, f - 0.5 * h * k2f, k3f)
        k4f = fp - h * k3p
        k4p = hypergeo_rhs(nu, m - h, f - h * k3f, k4f)
        f = f - h * (k1f + 2.0 * k2f + 2.0 * k3f + k4f) / 6.0
        fp = fp - h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        F[k + 1], Fp[k + 1] = f, fp
    mu = mu[::-1].copy()
    F = F[::-1].copy()
    Fp = Fp[::-1].copy()
    Fpp = np.array([hypergeo_rhs(nu, float(m), float(v), float(d))
                    for m, v, d in zip(mu, F, Fp)])
    resid = _residual_from_samples(nu, mu, F, h)
    sol = SimilaritySolution(nu=nu, branch=branch, s=s, mu=mu, F=F, Fp=Fp,
                             Fpp=Fpp, step=h, residual_max=resid)
    if resid > residual_tol:
        raise ResidualError(
            f"ODE residual {resid:.3e} exceeds tolerance {residual_tol:.1e}")
    return sol


def eval_similarity(sol: SimilaritySolution, x, y):
    """(psi, u1, u2) at a point: psi = x^nu F(mu), u1 = x^(nu-1)(nu F - mu F'),
    u2 = 2 y x^(nu-1) F' with mu = y^2/x."""
    xa = np.asarray(x, float)
    ya = np.asarray(y, float)
    if np.any(xa <= 0.0):
        raise DomainError("similarity evaluation needs x > 0")
    mu = ya * ya / xa
    F, Fp = sol.evaluate(mu)
    nu = sol.nu
    psi = xa ** nu * F
    u1 = xa ** (nu - 1.0) * (nu * F - mu * Fp)
    u2 = 2.0 * ya * xa ** (nu - 1.0) * Fp
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(psi), float(u1), float(u2)
    return psi, u1, u2


def energy_U(u: GridField, sonic: SonicCurve, domain: Domain | None = None) -> float:
    """Weighted Dirichlet energy ||u||_star^2; requires the parabolic sonic
    curve so the sigma' = 2y weight matches the similarity reduction.  The
    grid mask is assumed to encode the integration region."""
    if not sonic.is_standard_parabola:
        raise ParameterError("energy_U is defined for sigma(y) = y^2")
    return weighted_norm(u, "star", sonic) ** 2
