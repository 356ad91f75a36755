"""Domain construction for the mixed elliptic-hyperbolic cold-plasma system.

The degeneracy curve x = sigma(y) (the "sonic curve") is tangent to the
vertical axis at the origin and separates an elliptic region x > sigma(y)
from a hyperbolic one x < sigma(y).  The computational domain is a
curvilinear triangle: an arc C1 of the curve family y = eps * x**m from the
origin up to the sonic curve, a characteristic arc Gamma traced from that
intersection, and a closing arc C2 (a chord back to the origin, or a pair of
axis-parallel segments for the omega_prime variant).  The boundary is
oriented counterclockwise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import DomainBuildError, DomainError, ParameterError

__all__ = [
    "SonicCurve",
    "RectangleSpec",
    "C1Spec",
    "DomainSpec",
    "Domain",
    "EpsilonBounds",
    "TraceStop",
    "PointClass",
    "ValidationReport",
    "eval_sonic",
    "c1_epsilon_bounds",
    "intersect_c1_sonic",
    "trace_characteristic",
    "build_domain",
    "classify_point",
    "validate_domain",
    "points_in_polygon",
    "polyline_distance",
    "resample_polyline",
    "signed_area",
    "default_spec",
]

# Clamp tolerance for the radicand sigma(y) - x at the sonic start point.
RADICAND_TOL = 1e-10


# ---------------------------------------------------------------------------
# sonic curve


@dataclass(frozen=True, eq=False)
class SonicCurve:
    """Degeneracy function sigma(y) with sigma(0) = sigma'(0) = 0.

    ``power`` curves are sigma(y) = coefficient * y**exponent with
    exponent >= 2; ``tabulated`` curves interpolate a monotone sample table
    with a monotone cubic (derivative pinned to zero at y = 0).
    """

    kind: str
    exponent: float = 2.0
    coefficient: float = 1.0
    y_table: np.ndarray | None = None
    sigma_table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "power":
            if not (self.exponent >= 2.0):
                raise ParameterError(f"power exponent must be >= 2, got {self.exponent}")
            if not (self.coefficient > 0.0):
                raise ParameterError(f"power coefficient must be > 0, got {self.coefficient}")
        elif self.kind == "tabulated":
            y = np.asarray(self.y_table, dtype=float)
            s = np.asarray(self.sigma_table, dtype=float)
            if y.ndim != 1 or y.shape != s.shape or y.size < 4:
                raise ParameterError("tabulated curve needs matching 1-d tables with >= 4 samples")
            if y[0] != 0.0 or s[0] != 0.0:
                raise ParameterError("tabulated curve must start at sigma(0) = 0")
            if np.any(np.diff(y) <= 0) or np.any(np.diff(s) <= 0):
                raise ParameterError("tabulated samples must be strictly increasing")
            object.__setattr__(self, "y_table", y)
            object.__setattr__(self, "sigma_table", s)
            d = PchipInterpolator(y, s).derivative()(y)
            d[0] = 0.0  # tangency at the origin
            spline = CubicHermiteSpline(y, s, d)
            if np.any(spline.derivative()(y[1:]) <= 0.0):
                raise ParameterError("tabulated curve must have sigma'(y) > 0 for y > 0")
            object.__setattr__(self, "_spline", spline)
            object.__setattr__(self, "_dspline", spline.derivative())
            object.__setattr__(self, "_ispline", spline.antiderivative())
        else:
            raise ParameterError(f"unknown sonic curve kind {self.kind!r}")

    @classmethod
    def power(cls, exponent: float = 2.0, coefficient: float = 1.0) -> "SonicCurve":
        return cls(kind="power", exponent=exponent, coefficient=coefficient)

    @classmethod
    def tabulated(cls, y: Sequence[float], sigma: Sequence[float]) -> "SonicCurve":
        return cls(kind="tabulated", y_table=np.asarray(y, float),
                   sigma_table=np.asarray(sigma, float))

    @property
    def is_standard_parabola(self) -> bool:
        """True when sigma(y) is exactly y**2."""
        return self.kind == "power" and self.exponent == 2.0 and self.coefficient == 1.0

    @property
    def y_max(self) -> float:
        return math.inf if self.kind == "power" else float(self.y_table[-1])

    def sigma(self, y):
        if self.kind == "power":
            if isinstance(y, float):
                return self.coefficient * y ** self.exponent
            return self.coefficient * np.asarray(y, float) ** self.exponent
        return self._spline(y)

    def sigma_prime(self, y):
        if self.kind == "power":
            k, c = self.exponent, self.coefficient
            if isinstance(y, float):
                return c * k * y ** (k - 1.0)
            return c * k * np.asarray(y, float) ** (k - 1.0)
        return self._dspline(y)

    def integral(self, y):
        """Antiderivative of sigma from 0 to y (closed form for power curves)."""
        if self.kind == "power":
            k, c = self.exponent, self.coefficient
            if isinstance(y, float):
                return c * y ** (k + 1.0) / (k + 1.0)
            return c * np.asarray(y, float) ** (k + 1.0) / (k + 1.0)
        return self._ispline(y)

    def to_dict(self) -> dict:
        if self.kind == "power":
            return {"kind": "power", "exponent": self.exponent, "coefficient": self.coefficient}
        return {"kind": "tabulated", "y": self.y_table.tolist(), "sigma": self.sigma_table.tolist()}


def eval_sonic(sonic: SonicCurve, y):
    """Return (sigma(y), sigma'(y)); y must be nonnegative."""
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError(f"sonic curve evaluated at negative y = {y}")
    if arr.ndim == 0:
        yf = float(arr)
        return float(sonic.sigma(yf)), float(sonic.sigma_prime(yf))
    return sonic.sigma(arr), sonic.sigma_prime(arr)


# ---------------------------------------------------------------------------
# rectangle and C1 family


@dataclass(frozen=True)
class RectangleSpec:
    """Bounding rectangle [p, ell] x [0, q] with a right-hand margin delta."""

    p: float
    q: float
    ell: float
    delta: float

    def __post_init__(self):
        if not (self.p < 0.0 < self.ell):
            raise ParameterError(f"need p < 0 < ell, got p={self.p}, ell={self.ell}")
        if not (self.q > 0.0):
            raise ParameterError(f"need q > 0, got {self.q}")
        if not (0.0 < self.delta < self.ell - self.p):
            raise ParameterError(
                f"need 0 < delta < ell - p, got delta={self.delta}, ell-p={self.ell - self.p}")

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "ell": self.ell, "delta": self.delta}


@dataclass(frozen=True)
class C1Spec:
    """Elliptic boundary family y = eps_c * x**m, m > 1/2."""

    eps_c: float
    m: float

    def __post_init__(self):
        if not (self.eps_c > 0.0):
            raise ParameterError(f"need eps_c > 0, got {self.eps_c}")
        if not (self.m > 0.5):
            raise ParameterError(f"need m > 1/2, got {self.m}")

    def y_of_x(self, x):
        return self.eps_c * np.asarray(x, float) ** self.m

    def slope(self, x):
        return self.eps_c * self.m * np.asarray(x, float) ** (self.m - 1.0)

    def to_dict(self) -> dict:
        return {"eps_c": self.eps_c, "m": self.m}


@dataclass(frozen=True)
class EpsilonBounds:
    """Admissible interval for the C1 family coefficient."""

    eps_min: float
    eps_max: float
    feasible: bool
    note: str = ""


def c1_epsilon_bounds(K: float, m: float, ell: float, delta: float) -> EpsilonBounds:
    """Coefficient window for y = eps*x**m: eps_min guarantees the sonic
    intersection lands at x0 <= ell - delta, eps_max keeps the boundary slope
    condition along C1.  K = 0 removes the upper bound entirely."""
    if not (0.0 <= K <= 1.0):
        raise ParameterError(f"need K in [0, 1], got {K}")
    if not (m > 0.5):
        raise ParameterError(f"need m > 1/2, got {m}")
    if not (0.0 < delta < ell):
        raise ParameterError(f"need 0 < delta < ell, got delta={delta}, ell={ell}")
    eps_min = math.sqrt((ell - delta) ** (1.0 - 2.0 * m))
    if K == 0.0:
        return EpsilonBounds(eps_min, math.inf, True)
    eps_max = math.sqrt(ell ** (1.0 - 2.0 * m) / (K * m))
    if m > 1.0 / K:
        return EpsilonBounds(eps_min, eps_max, False,
                             note=f"m = {m} exceeds 1/K = {1.0 / K}; x0 margin not guaranteed")
    if eps_min > eps_max:
        return EpsilonBounds(eps_min, eps_max, False, note="empty coefficient interval")
    return EpsilonBounds(eps_min, eps_max, True)


def intersect_c1_sonic(c1: C1Spec, sonic: SonicCurve, ell: float) -> tuple[float, float]:
    """Positive intersection of y = eps_c*x**m with x = sigma(y).

    Bisection on g(x) = x - sigma(eps_c * x**m) over (0, ell]; g > 0 near the
    origin tangency, so the first sign change brackets the root.
    """
    eps_c, m = c1.eps_c, c1.m

    def g(x: float) -> float:
        return x - float(sonic.sigma(eps_c * x ** m))

    xs = np.linspace(0.0, ell, 4097)[1:]
    vals = np.array([g(float(x)) for x in xs])
    neg = np.nonzero(vals <= 0.0)[0]
    if neg.size == 0:
        raise DomainError(f"C1 does not meet the sonic curve on (0, {ell}]")
    hi = float(xs[neg[0]])
    lo = float(xs[neg[0] - 1]) if neg[0] > 0 else hi * 0.5
    while g(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise DomainError("C1/sonic intersection collapsed to the origin")
    tol = 1e-12 * ell
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    x0 = 0.5 * (lo + hi)
    y0 = eps_c * x0 ** m
    return x0, y0


# ---------------------------------------------------------------------------
# characteristic tracing


@dataclass(frozen=True)
class TraceStop:
    """Stop condition for a characteristic trace: kind 'x' or 'y'."""

    kind: str
    value: float

    @classmethod
    def x_reaches(cls, value: float) -> "TraceStop":
        return cls("x", value)

    @classmethod
    def y_reaches(cls, value: float) -> "TraceStop":
        return cls("y", value)


def trace_characteristic(sonic: SonicCurve, start: tuple[float, float], stop: TraceStop,
                         step: float, y_guard: float | None = None) -> np.ndarray:
    """Trace the characteristic dx/dy = -sqrt(sigma(y) - x) from a sonic point.

    The y-form is not Lipschitz at the start (the radicand vanishes there), so
    the integration runs in the regularized parameter rho = sqrt(sigma - x):

        dy/drho = 2*rho / (sigma'(y) + rho),    x = sigma(y) - rho**2,

    which is smooth through rho = 0 and keeps classical RK4 at fourth order.
    ``step`` is the rho increment.  Returns an (N, 2) polyline with x
    non-increasing and y strictly increasing, ending on the stop condition.
    """
    if step <= 0.0:
        raise ParameterError(f"need step > 0, got {step}")
    x0, y0 = float(start[0]), float(start[1])
    if y0 < 0.0:
        raise DomainError(f"trace start must have y >= 0, got {y0}")
    s0 = float(sonic.sigma(y0)) - x0
    if s0 < -RADICAND_TOL:
        raise DomainError(
            f"trace start ({x0}, {y0}) lies in the elliptic region (sigma - x = {s0:.3e})")
    if stop.kind == "x" and stop.value >= x0:
        raise ParameterError(f"x stop value {stop.value} must lie below the start x = {x0}")
    if stop.kind == "y" and stop.value <= y0:
        raise ParameterError(f"y stop value {stop.value} must lie above the start y = {y0}")
    guard = y_guard if y_guard is not None else y0 + 50.0 * max(1.0, y0)

    sig = sonic.sigma
    sigp = sonic.sigma_prime

    def rhs(rho: float, y: float) -> float:
        return 2.0 * rho / (float(sigp(y)) + rho)

    def rk4(y: float, rho: float, h: float) -> float:
        k1 = rhs(rho, y)
        k2 = rhs(rho + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(rho + h, y + h * k3)
        return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    rho = math.sqrt(max(s0, 0.0))
    y = y0
    pts = [(x0, y0)]
    max_steps = 20_000_000
    for _ in range(max_steps):
        y_new = rk4(y, rho, step)
        rho_new = rho + step
        x_new = float(sig(y_new)) - rho_new * rho_new
        crossed = (stop.kind == "x" and x_new <= stop.value) or \
                  (stop.kind == "y" and y_new >= stop.value)
        if crossed:
            lo, hi = 0.0, step
            for _ in range(80):
                h = 0.5 * (lo + hi)
                y_h = rk4(y, rho, h)
                if stop.kind == "x":
                    val = float(sig(y_h)) - (rho + h) ** 2 - stop.value
                    if val > 0.0:
                        lo = h
                    else:
                        hi = h
                else:
                    if y_h < stop.value:
                        lo = h
                    else:
                        hi = h
            h = hi
            y_end = rk4(y, rho, h)
            rho_end = rho + h
            if stop.kind == "x":
                pts.append((stop.value, y_end))
            else:
                pts.append((float(sig(stop.value)) - rho_end * rho_end, stop.value))
            return np.array(pts)
        pts.append((x_new, y_new))
        rho, y = rho_new, y_new
        if y > guard:
            raise DomainError(
                f"stop condition {stop.kind}={stop.value} unreachable before y = {guard}")
    raise DomainError("characteristic trace exceeded the step budget")


# ---------------------------------------------------------------------------
# polyline helpers


def signed_area(poly: np.ndarray) -> float:
    """Shoelace area of a closed polygon (positive = counterclockwise)."""
    x, y = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * y2 - x2 * y))


def polyline_length(poly: np.ndarray) -> float:
    d = np.diff(poly, axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def resample_polyline(poly: np.ndarray, target: float) -> np.ndarray:
    """Resample one smooth polyline piece at uniform arclength <= target.

    Endpoints are preserved exactly; interior nodes are linear interpolants of
    the input chain, so a dense input gets coarsened without leaving the curve
    by more than the input's own chord error.
    """
    poly = np.asarray(poly, float)
    d = np.diff(poly, axis=0)
    seg = np.hypot(d[:, 0], d[:, 1])
    total = float(seg.sum())
    if total == 0.0:
        return poly[:1].copy()
    n = max(1, int(math.ceil(total / target)))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    si = np.linspace(0.0, total, n + 1)
    out = np.column_stack([np.interp(si, s, poly[:, 0]), np.interp(si, s, poly[:, 1])])
    out[0] = poly[0]
    out[-1] = poly[-1]
    return out


def polyline_distance(points: np.ndarray, poly: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Minimum distance from each point to a polyline, exact per segment."""
    pts = np.atleast_2d(np.asarray(points, float))
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    ab2 = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    best = np.full(pts.shape[0], np.inf)
    for k in range(0, a.shape[0], chunk):
        aa = a[k:k + chunk]
        dd = ab[k:k + chunk]
        d2 = ab2[k:k + chunk]
        diff = pts[:, None, :] - aa[None, :, :]
        t = np.clip(np.einsum("pij,ij->pi", diff, dd) / d2[None, :], 0.0, 1.0)
        proj = aa[None, :, :] + t[:, :, None] * dd[None, :, :]
        dist = np.hypot(pts[:, None, 0] - proj[:, :, 0], pts[:, None, 1] - proj[:, :, 1])
        best = np.minimum(best, dist.min(axis=1))
    return best


def points_in_polygon(px: np.ndarray, py: np.ndarray, poly: np.ndarray,
                      chunk: int = 256) -> np.ndarray:
    """Even-odd (crossing number) point-in-polygon test, vectorized."""
    px = np.asarray(px, float).ravel()
    py = np.asarray(py, float).ravel()
    if not np.allclose(poly[0], poly[-1]):
        poly = np.vstack([poly, poly[0]])
    x1, y1 = poly[:-1, 0], poly[:-1, 1]
    x2, y2 = poly[1:, 0], poly[1:, 1]
    inside = np.zeros(px.shape[0], dtype=bool)
    for k in range(0, x1.shape[0], chunk):
        a_x1, a_y1 = x1[k:k + chunk][None, :], y1[k:k + chunk][None, :]
        a_x2, a_y2 = x2[k:k + chunk][None, :], y2[k:k + chunk][None, :]
        p_x, p_y = px[:, None], py[:, None]
        straddles = (a_y1 > p_y) != (a_y2 > p_y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a_x1 + (p_y - a_y1) * (a_x2 - a_x1) / (a_y2 - a_y1)
        hits = straddles & (p_x < xint)
        inside ^= (hits.sum(axis=1) % 2).astype(bool)
    return inside


def grid_points_in_polygon(xc: np.ndarray, yc: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd test for a tensor grid of points, one scanline per row.

    Returns a (len(yc), len(xc)) boolean array; equivalent to
    :func:`points_in_polygon` on the meshgrid but O(rows * edges).
    """
    if not np.allclose(poly[0], poly[-1]):
        poly = np.vstack([poly, poly[0]])
    x1, y1 = poly[:-1, 0], poly[:-1, 1]
    x2, y2 = poly[1:, 0], poly[1:, 1]
    xc = np.asarray(xc, float)
    out = np.zeros((len(yc), len(xc)), dtype=bool)
    for j, y in enumerate(np.asarray(yc, float)):
        straddle = (y1 > y) != (y2 > y)
        if not straddle.any():
            continue
        xs = x1[straddle] + (y - y1[straddle]) * (x2[straddle] - x1[straddle]) \
            / (y2[straddle] - y1[straddle])
        xs.sort()
        crossings_right = xs.size - np.searchsorted(xs, xc, side="right")
        out[j] = (crossings_right % 2) == 1
    return out


def _cross2(ax, ay, bx, by):
    return ax * by - ay * bx


def polygon_is_simple(poly: np.ndarray) -> bool:
    """Brute-force self-intersection test on a (coarse) closed polygon,
    vectorized over the second segment of each pair."""
    n = poly.shape[0] - 1
    p = poly[:-1]
    q = poly[1:]
    for i in range(n):
        j0 = i + 2
        j1 = n - 1 if i == 0 else n  # skip the closing edge's shared endpoint
        if j0 >= j1:
            continue
        a, b = poly[i], poly[i + 1]
        c, d = p[j0:j1], q[j0:j1]
        d1 = _cross2(d[:, 0] - c[:, 0], d[:, 1] - c[:, 1], a[0] - c[:, 0], a[1] - c[:, 1])
        d2 = _cross2(d[:, 0] - c[:, 0], d[:, 1] - c[:, 1], b[0] - c[:, 0], b[1] - c[:, 1])
        d3 = _cross2(b[0] - a[0], b[1] - a[1], c[:, 0] - a[0], c[:, 1] - a[1])
        d4 = _cross2(b[0] - a[0], b[1] - a[1], d[:, 0] - a[0], d[:, 1] - a[1])
        if np.any(((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))):
            return False
    return True


# ---------------------------------------------------------------------------
# domain assembly


class PointClass(Enum):
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"
    SONIC = "sonic"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: dict

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {k: {"passed": c.passed, "margin": c.margin, "detail": c.detail}
                for k, c in self.checks.items()}


@dataclass(frozen=True)
class DomainSpec:
    """Input bundle for :func:`build_domain`."""

    sonic: SonicCurve
    rect: RectangleSpec
    c1: C1Spec
    K: float = 0.0
    variant: str = "omega"
    x_lambda: float | None = None
    trace_step: float = 1e-3

    def __post_init__(self):
        if self.variant not in ("omega", "omega_prime"):
            raise ParameterError(f"unknown variant {self.variant!r}")
        if not (0.0 <= self.K <= 1.0):
            raise ParameterError(f"need K in [0, 1], got {self.K}")
        if self.variant == "omega_prime":
            if self.x_lambda is None or not (self.rect.p < self.x_lambda < 0.0):
                raise ParameterError(
                    f"omega_prime needs p < x_lambda < 0, got {self.x_lambda}")


@dataclass(frozen=True, eq=False)
class Domain:
    """Assembled domain: oriented boundary C1 -> Gamma -> C2 plus metadata.

    Immutable after construction; polylines are dense (trace resolution) and
    get coarsened on demand by :meth:`resampled_boundary`.
    """

    sonic: SonicCurve
    rect: RectangleSpec
    c1spec: C1Spec
    K: float
    variant: str
    x0: float
    y0: float
    c1: np.ndarray
    gamma: np.ndarray
    c2_legs: tuple
    x_lambda: float | None
    validation: ValidationReport

    @property
    def ell(self) -> float:
        return self.rect.ell

    @property
    def delta(self) -> float:
        return self.rect.delta

    @property
    def c2(self) -> np.ndarray:
        parts = [self.c2_legs[0]]
        for leg in self.c2_legs[1:]:
            parts.append(leg[1:])
        return np.vstack(parts)

    @property
    def polygon(self) -> np.ndarray:
        """Closed counterclockwise boundary polygon (first vertex repeated)."""
        loop = np.vstack([self.c1[:-1], self.gamma[:-1], self.c2[:-1], self.c1[:1]])
        return loop

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        p = self.polygon
        return float(p[:, 0].min()), float(p[:, 0].max()), float(p[:, 1].min()), float(p[:, 1].max())

    @property
    def area(self) -> float:
        return signed_area(self.polygon)

    def resampled_boundary(self, target: float) -> dict:
        """Boundary pieces resampled at segment length <= target.

        C2 legs are resampled one by one so corner vertices survive.
        """
        legs = [resample_polyline(leg, target) for leg in self.c2_legs]
        c2 = legs[0]
        for leg in legs[1:]:
            c2 = np.vstack([c2, leg[1:]])
        return {
            "c1": resample_polyline(self.c1, target),
            "gamma": resample_polyline(self.gamma, target),
            "c2": c2,
        }

    def to_dict(self) -> dict:
        return {
            "sonic": self.sonic.to_dict(),
            "rect": self.rect.to_dict(),
            "c1_family": self.c1spec.to_dict(),
            "K": self.K,
            "variant": self.variant,
            "x_lambda": self.x_lambda,
            "x0": self.x0,
            "y0": self.y0,
            "boundary": {
                "c1": self.c1.tolist(),
                "gamma": self.gamma.tolist(),
                "c2": self.c2.tolist(),
            },
            "validation": self.validation.to_dict(),
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _default_pair(sonic: SonicCurve, K: float, ell: float):
    """Multiplier pair (a, b) used for the boundary slope condition when the
    caller does not supply one.  K = 0 uses the trivially admissible pair;
    small K uses the general-curve pair, larger K the parabola pair."""
    if K == 0.0:
        return (lambda y: np.zeros_like(np.asarray(y, float)),
                lambda y: -(1.0 + sonic.sigma(np.asarray(y, float)) / ell))
    if K <= 0.5:
        return (lambda y: K * (np.asarray(y, float) + sonic.integral(np.asarray(y, float)) / ell),
                lambda y: -(1.0 + sonic.sigma(np.asarray(y, float)) / ell))
    return (lambda y: K * np.asarray(y, float),
            lambda y: -(1.0 + sonic.sigma(np.asarray(y, float)) / (2.0 * ell)))


def _c1_polyline(c1: C1Spec, x0: float, y0: float, trace_step: float) -> np.ndarray:
    est_len = x0 + y0
    n = int(min(max(64, math.ceil(est_len / trace_step)), 8192))
    # grade samples toward the origin when the curve is vertical there (m < 1)
    grade = max(1.0, 1.0 / c1.m)
    t = np.linspace(0.0, 1.0, n + 1) ** grade
    x = x0 * t
    y = c1.eps_c * x ** c1.m
    pts = np.column_stack([x, y])
    pts[0] = (0.0, 0.0)
    pts[-1] = (x0, y0)
    return pts


def build_domain(spec: DomainSpec, pair=None) -> Domain:
    """Assemble and validate a Domain from its component specs.

    Raises :class:`DomainBuildError` naming the first failed structural check;
    the full validation report rides on the exception and on the Domain.
    """
    sonic, rect, c1s = spec.sonic, spec.rect, spec.c1
    x0, y0 = intersect_c1_sonic(c1s, sonic, rect.ell)
    if x0 > rect.ell - rect.delta + 1e-12 * rect.ell:
        raise DomainBuildError(
            "rect_margin", f"sonic intersection x0 = {x0} exceeds ell - delta = {rect.ell - rect.delta}")

    c1_poly = _c1_polyline(c1s, x0, y0, spec.trace_step)

    if spec.variant == "omega":
        stop = TraceStop.x_reaches(0.0)
    else:
        stop = TraceStop.x_reaches(spec.x_lambda)
    gamma = trace_characteristic(sonic, (x0, y0), stop, spec.trace_step,
                                 y_guard=10.0 * rect.q)
    xe, ye = gamma[-1]
    if ye > rect.q:
        raise DomainBuildError(
            "rect_margin", f"characteristic exits the rectangle top: y = {ye} > q = {rect.q}")

    if spec.variant == "omega":
        c2_legs = (np.array([[xe, ye], [0.0, 0.0]]),)
    else:
        c2_legs = (np.array([[xe, ye], [xe, 0.0]]),
                   np.array([[xe, 0.0], [0.0, 0.0]]))

    report_pair = pair if pair is not None else _default_pair(sonic, spec.K, rect.ell)
    dom = Domain(sonic=sonic, rect=rect, c1spec=c1s, K=spec.K, variant=spec.variant,
                 x0=x0, y0=y0, c1=c1_poly, gamma=gamma, c2_legs=c2_legs,
                 x_lambda=spec.x_lambda, validation=ValidationReport(checks={}))
    report = validate_domain(dom, report_pair)
    dom = Domain(sonic=sonic, rect=rect, c1spec=c1s, K=spec.K, variant=spec.variant,
                 x0=x0, y0=y0, c1=c1_poly, gamma=gamma, c2_legs=c2_legs,
                 x_lambda=spec.x_lambda, validation=report)
    if not report.all_passed:
        bad = report.failed()[0]
        raise DomainBuildError(bad, f"domain check {bad!r} failed: {report.checks[bad].detail}",
                               report=report)
    return dom


def validate_domain(domain: Domain, multiplier_pair) -> ValidationReport:
    """Run all structural checks; returns a report, never raises.

    ``multiplier_pair`` is a pair of callables (a(y), b(y)) used for the
    boundary slope condition a*dy/dx + b < 0 along C1.
    """
    a_fn, b_fn = multiplier_pair
    checks: dict[str, CheckResult] = {}
    scale = max(domain.ell, domain.rect.q)
    tol = 1e-12 * scale

    # x0 on the sonic curve
    gap = abs(domain.x0 - float(domain.sonic.sigma(domain.y0)))
    checks["x0_on_sonic"] = CheckResult(gap <= 1e-10 * scale, gap,
                                        f"|x0 - sigma(y0)| = {gap:.3e}")

    # closure of the boundary chain
    gaps = [np.hypot(*(domain.c1[-1] - domain.gamma[0])),
            np.hypot(*(domain.gamma[-1] - domain.c2[0])),
            np.hypot(*(domain.c2[-1] - domain.c1[0]))]
    worst = float(max(gaps))
    checks["closed"] = CheckResult(worst <= tol, worst, f"max endpoint gap {worst:.3e}")

    # counterclockwise orientation
    area = signed_area(domain.polygon)
    checks["ccw"] = CheckResult(area > 0.0, area, f"signed area {area:.6e}")

    # simplicity, on a coarsened copy to keep the O(N^2) test cheap
    coarse_pieces = domain.resampled_boundary(scale / 192.0)
    coarse = np.vstack([coarse_pieces["c1"][:-1], coarse_pieces["gamma"][:-1],
                        coarse_pieces["c2"][:-1], coarse_pieces["c1"][:1]])
    simple = polygon_is_simple(coarse)
    checks["simple"] = CheckResult(simple, 0.0 if simple else -1.0,
                                   "coarse polygon self-intersection test")

    # C2 monotonicity: dy <= 0 and dx >= 0 on every leg segment
    worst_dy, worst_dx = -math.inf, math.inf
    for leg in domain.c2_legs:
        d = np.diff(leg, axis=0)
        if d.shape[0]:
            worst_dy = max(worst_dy, float(d[:, 1].max()))
            worst_dx = min(worst_dx, float(d[:, 0].min()))
    ok = worst_dy <= tol and worst_dx >= -tol
    checks["c2_monotone"] = CheckResult(ok, min(tol - worst_dy, worst_dx + tol),
                                        f"max dy {worst_dy:.3e}, min dx {worst_dx:.3e}")

    # discrete characteristic relation along Gamma at segment midpoints
    g = domain.gamma
    d = np.diff(g, axis=0)
    keep = np.abs(d[:, 1]) > 1e-300
    mid = 0.5 * (g[:-1] + g[1:])
    slope2 = (d[keep, 0] / d[keep, 1]) ** 2
    s_mid = domain.sonic.sigma(mid[keep, 1]) - mid[keep, 0]
    resid = float(np.max(np.abs(slope2 - s_mid))) if keep.any() else 0.0
    step2 = float(np.max(np.abs(d[:, 1]))) ** 2
    gamma_tol = 10.0 * step2 + 1e-10
    checks["gamma_ode"] = CheckResult(resid <= gamma_tol, resid,
                                      f"max |(dx/dy)^2 - (sigma - x)| = {resid:.3e}")

    # rectangle margin: sup x over the boundary <= ell - delta
    sup_x = float(domain.polygon[:, 0].max())
    margin = (domain.ell - domain.delta) - sup_x
    checks["rect_margin"] = CheckResult(margin >= -tol, margin,
                                        f"ell - delta - sup x = {margin:.3e}")

    # boundary slope condition along C1: a*dy/dx + b < 0 at segment midpoints
    c1 = domain.c1
    d1 = np.diff(c1, axis=0)
    ymid = 0.5 * (c1[:-1, 1] + c1[1:, 1])
    dx = d1[:, 0]
    good = dx > 1e-300
    lhs = np.asarray(a_fn(ymid[good])) * (d1[good, 1] / dx[good]) + np.asarray(b_fn(ymid[good]))
    worst_c4 = float(lhs.max()) if good.any() else -math.inf
    checks["condition4"] = CheckResult(worst_c4 < 0.0, -worst_c4,
                                       f"max of a*dy/dx + b = {worst_c4:.3e}")

    return ValidationReport(checks=checks)


def classify_point(domain: Domain, x: float, y: float) -> PointClass:
    """Locate a point: outside the polygon, or elliptic/hyperbolic/sonic by
    the sign of x - sigma(y) with a band of width 1e-12*ell around zero."""
    tol = 1e-12 * domain.ell
    inside = bool(points_in_polygon(np.array([x]), np.array([y]), domain.polygon)[0])
    if not inside:
        on_edge = float(polyline_distance(np.array([[x, y]]), domain.polygon)[0]) <= tol
        if not on_edge:
            return PointClass.OUTSIDE
    if y < 0.0:
        return PointClass.OUTSIDE
    diff = x - float(domain.sonic.sigma(float(y)))
    if abs(diff) <= tol:
        return PointClass.SONIC
    return PointClass.ELLIPTIC if diff > 0.0 else PointClass.HYPERBOLIC


def default_spec(K: float = 0.0, variant: str = "omega", x_lambda: float = -0.05,
                 trace_step: float = 1e-3) -> DomainSpec:
    """The standard configuration used throughout the tests and CLI defaults:
    sigma = y^2, rect (p, q, ell, delta) = (-1, 2, 1, 0.1), C1: y = 2x."""
    return DomainSpec(
        sonic=SonicCurve.power(2.0, 1.0),
        rect=RectangleSpec(p=-1.0, q=2.0, ell=1.0, delta=0.1),
        c1=C1Spec(eps_c=2.0, m=1.0),
        K=K,
        variant=variant,
        x_lambda=x_lambda if variant == "omega_prime" else None,
        trace_step=trace_step,
    )
