"""Closed-form calculus for a small catalog of maximal monotone operators.

Operators are never evaluated as sets.  Everything goes through the resolvent
``J_eps = (I + eps A)^{-1}``, the Yosida approximation
``A_eps = (I - J_eps) / eps`` and the minimal section ``A°``.

All point arguments may be a single point of shape ``(d,)`` or a batch of
shape ``(N, d)``; the return value has the same leading shape.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import CertificationError, InputError, ParameterError

BALL_TOL = 1e-12


class _Infinite:
    """Sentinel for the minimal section outside the domain."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (d,) or x.ndim > 2:
        raise InputError(f"expected points of dimension {d}, got shape {x.shape}")
    return x


def _check_eps(eps):
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")


def _row_dot(a, b):
    return np.sum(a * b, axis=-1)


def _apply_matrix(mat, x):
    # explicit column sum keeps the floating-point order independent of batch size
    out = np.zeros(x.shape[:-1] + (mat.shape[0],))
    for j in range(mat.shape[1]):
        out = out + x[..., j, None] * mat[:, j]
    return out


# -- convex sets -------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise InputError("box bounds must have equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise InputError("box needs lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x):
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def interior_ball(self):
        """Center and radius of a ball inside the box."""
        finite = np.isfinite(self.lower) & np.isfinite(self.upper)
        half = (self.upper - self.lower)[finite] / 2.0
        r = float(half.min()) if half.size else 1.0
        center = np.zeros(self.dimension)
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if np.isfinite(lo) and np.isfinite(hi):
                center[i] = (lo + hi) / 2.0
            elif np.isfinite(lo):
                center[i] = lo + r
            elif np.isfinite(hi):
                center[i] = hi - r
        return center, r

    def min_norm_normal_shift(self, p, w):
        """Least-norm element of ``w + N_C(p)`` for a point ``p`` of the box."""
        at_lo = p <= self.lower
        at_hi = p >= self.upper
        out = np.where(at_lo, np.minimum(w, 0.0), w)
        out = np.where(at_hi, np.maximum(out, 0.0), out)
        return np.where(at_lo & at_hi, 0.0, out)

    def is_normal(self, p, v, tol):
        lo_ok = np.where(p > self.lower, 0.0, np.minimum(v, 0.0))
        hi_ok = np.where(p < self.upper, 0.0, np.maximum(v, 0.0))
        # the free part is whatever the active constraints do not absorb
        residual = v - lo_ok - hi_ok
        return np.linalg.norm(residual, axis=-1) <= tol * np.maximum(
            np.linalg.norm(v, axis=-1), 1e-300
        )


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if not self.radius > 0:
            raise InputError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self):
        return self.center.size

    def project(self, x):
        diff = x - self.center
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        scale = np.where(dist > self.radius, self.radius / np.maximum(dist, 1e-300), 1.0)
        return self.center + diff * scale

    def contains(self, x):
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + BALL_TOL

    def interior_ball(self):
        return self.center.copy(), self.radius

    def _outer_normal(self, p):
        diff = p - self.center
        return diff / np.maximum(np.linalg.norm(diff, axis=-1, keepdims=True), 1e-300)

    def _on_boundary(self, p):
        return np.linalg.norm(p - self.center, axis=-1) >= self.radius - BALL_TOL

    def min_norm_normal_shift(self, p, w):
        n = self._outer_normal(p)
        wn = _row_dot(w, n)[..., None]
        # min over t >= 0 of |w + t n| only moves w when it points inward
        drop = self._on_boundary(p)[..., None] & (wn < 0)
        return np.where(drop, w - wn * n, w)

    def is_normal(self, p, v, tol):
        n = self._outer_normal(p)
        vn = _row_dot(v, n)
        tangential = np.linalg.norm(v - vn[..., None] * n, axis=-1)
        vnorm = np.maximum(np.linalg.norm(v, axis=-1), 1e-300)
        return self._on_boundary(p) & (vn >= 0) & (tangential <= tol * vnorm)


@dataclass(frozen=True)
class HalfSpace:
    """The set ``{x : <normal, x> <= offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(-1)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise InputError("half-space normal must be nonzero")
        if abs(norm - 1.0) > 1e-9:
            raise InputError("half-space normal must be a unit vector")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dimension(self):
        return self.normal.size

    def project(self, x):
        excess = _row_dot(x, self.normal) - self.offset
        return x - np.maximum(excess, 0.0)[..., None] * self.normal

    def contains(self, x):
        # projections land on the hyperplane only up to rounding
        return _row_dot(x, self.normal) <= self.offset + BALL_TOL * max(1.0, abs(self.offset))

    def interior_ball(self):
        return (self.offset - 1.0) * self.normal, 1.0

    def min_norm_normal_shift(self, p, w):
        wn = _row_dot(w, self.normal)[..., None]
        active = (_row_dot(p, self.normal) >= self.offset)[..., None] & (wn < 0)
        return np.where(active, w - wn * self.normal, w)

    def is_normal(self, p, v, tol):
        vn = _row_dot(v, self.normal)
        tangential = np.linalg.norm(v - vn[..., None] * self.normal, axis=-1)
        vnorm = np.maximum(np.linalg.norm(v, axis=-1), 1e-300)
        return (vn >= 0) & (tangential <= tol * vnorm)


# -- operators ---------------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    dimension: int


@dataclass(frozen=True)
class Linear:
    """``A(x) = M x`` for a symmetric positive semidefinite ``M``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise InputError("linear operator needs a square matrix")
        if not np.allclose(m, m.T, atol=1e-12):
            raise InputError("linear operator matrix must be symmetric")
        if np.linalg.eigvalsh(m).min() < -1e-12:
            raise InputError("linear operator matrix must be positive semidefinite")
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NormalCone:
    set: object

    def __post_init__(self):
        if not bool(self.set.contains(np.zeros(self.set.dimension))):
            raise InputError("the origin must lie in the constraint set")

    @property
    def dimension(self):
        return self.set.dimension


@dataclass(frozen=True)
class SubdiffAbs:
    """Subdifferential of ``weight * |x|_1``."""

    weight: float
    dimension: int

    def __post_init__(self):
        if not self.weight >= 0:
            raise InputError("weight must be nonnegative")


@dataclass(frozen=True)
class NormalConePlusLinear:
    """``N_C + beta I``."""

    set: object
    beta: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise InputError("beta must be nonnegative")
        if not bool(self.set.contains(np.zeros(self.set.dimension))):
            raise InputError("the origin must lie in the constraint set")

    @property
    def dimension(self):
        return self.set.dimension


OPERATOR_KINDS = (Zero, Linear, NormalCone, SubdiffAbs, NormalConePlusLinear)


def catalog():
    """One representative instance of every built-in operator kind."""
    inf = math.inf
    return {
        "zero": Zero(2),
        "linear": Linear(np.array([[2.0, 0.5], [0.5, 1.0]])),
        "normal_cone_box": NormalCone(Box([0.0, -1.0], [inf, 1.0])),
        "normal_cone_ball": NormalCone(Ball([0.2, 0.0], 1.0)),
        "normal_cone_half_space": NormalCone(HalfSpace([0.6, 0.8], 0.5)),
        "normal_cone_half_line": NormalCone(Box([0.0], [inf])),
        "subdiff_abs": SubdiffAbs(0.7, 2),
        "normal_cone_plus_linear": NormalConePlusLinear(Box([-1.0, -1.0], [1.0, 2.0]), 0.5),
        "normal_cone_plus_linear_ball": NormalConePlusLinear(Ball([0.3, 0.0], 1.5), 1.0),
        "normal_cone_plus_linear_half_space": NormalConePlusLinear(HalfSpace([0.0, 1.0], 0.4),
                                                                   2.0),
    }


def constraint_set(spec):
    """The convex set behind a normal-cone operator, or None when D(A) = R^d."""
    if isinstance(spec, (NormalCone, NormalConePlusLinear)):
        return spec.set
    return None


def in_domain(spec, x):
    x = _as_points(x, spec.dimension)
    c = constraint_set(spec)
    if c is None:
        return np.ones(x.shape[:-1], dtype=bool) if x.ndim > 1 else np.bool_(True)
    return c.contains(x)


def resolvent(spec, eps, x):
    """``J_eps(x) = (I + eps A)^{-1} x``."""
    _check_eps(eps)
    x = _as_points(x, spec.dimension)
    if isinstance(spec, Zero):
        return x.copy()
    if isinstance(spec, Linear):
        inv = np.linalg.inv(np.eye(spec.dimension) + eps * spec.matrix)
        return _apply_matrix(inv, x)
    if isinstance(spec, NormalCone):
        return spec.set.project(x)
    if isinstance(spec, SubdiffAbs):
        t = eps * spec.weight
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    if isinstance(spec, NormalConePlusLinear):
        return spec.set.project(x / (1.0 + eps * spec.beta))
    raise InputError(f"unknown operator {spec!r}")


def yosida(spec, eps, x):
    """``A_eps(x) = (x - J_eps(x)) / eps``."""
    x = _as_points(x, spec.dimension)
    return (x - resolvent(spec, eps, x)) / eps


def minimal_section(spec, x):
    """Least-norm element of ``A(x)`` for a single point, or ``INFINITE``."""
    x = _as_points(x, spec.dimension)
    if x.ndim != 1:
        raise InputError("minimal_section takes a single point")
    if isinstance(spec, Zero):
        return np.zeros_like(x)
    if isinstance(spec, Linear):
        return spec.matrix @ x
    if isinstance(spec, SubdiffAbs):
        return spec.weight * np.sign(x)
    c = constraint_set(spec)
    if not bool(c.contains(x)):
        return INFINITE
    if isinstance(spec, NormalCone):
        return np.zeros_like(x)
    return c.min_norm_normal_shift(x, spec.beta * x)


def project_domain_closure(spec, x):
    x = _as_points(x, spec.dimension)
    c = constraint_set(spec)
    return x.copy() if c is None else c.project(x)


# -- Yosida lower-bound constants---------------------------------------------


@dataclass(frozen=True)
class YosidaLowerBound:
    """Constants with ``<A_eps x, x - a> >= m1 |A_eps x| - m2 |x - a| - m1 m2``."""

    a: np.ndarray
    m1: float
    m2: float
    worst_slack: float = field(default=math.inf)


def _lower_bound_candidate(spec):
    d = spec.dimension
    if isinstance(spec, (Zero, Linear, SubdiffAbs)):
        a = np.zeros(d)
        if isinstance(spec, Zero):
            return a, 1.0, 0.0
        if isinstance(spec, Linear):
            return a, 1.0, float(np.linalg.norm(spec.matrix, 2))
        return a, 1.0, spec.weight * math.sqrt(d)
    a, r = spec.set.interior_ball()
    if isinstance(spec, NormalCone):
        return a, r, 0.0
    # N_C + beta I: the quadratic part costs at most beta (r + |a|)^2 / 4
    return a, r, spec.beta * (r + np.linalg.norm(a)) ** 2 / (4.0 * r)


def yosida_bound_slack(spec, eps, x, a, m1, m2):
    """Slack of the Yosida lower bound at the given points (negative = violated)."""
    ae = yosida(spec, eps, x)
    diff = x - a
    lhs = _row_dot(ae, diff)
    rhs = m1 * np.linalg.norm(ae, axis=-1) - m2 * np.linalg.norm(diff, axis=-1) - m1 * m2
    return lhs - rhs, np.maximum(np.abs(lhs), np.abs(rhs))


def yosida_lower_bound_constants(spec, n_samples=2000, seed=0):
    """Return sampled-certified constants ``(a, m1, m2)`` for a built-in operator.

    The candidate comes in closed form from an interior ball of the domain;
    certification checks the inequality on eps in {1e-3, 1e-2, 1e-1, 1} and
    points in [-10, 10]^d (a lattice plus random draws).  A violation raises
    :class:`CertificationError` carrying the offending ``(eps, x)``.
    """
    a, m1, m2 = _lower_bound_candidate(spec)
    d = spec.dimension
    rng = np.random.default_rng(seed)
    lattice = np.linspace(-10.0, 10.0, 201)
    axes = [np.outer(lattice, e) for e in np.eye(d)]
    pts = np.vstack([rng.uniform(-10.0, 10.0, size=(n_samples, d))] + axes)
    worst = math.inf
    for eps in (1e-3, 1e-2, 1e-1, 1.0):
        slack, scale = yosida_bound_slack(spec, eps, pts, a, m1, m2)
        rel = slack / np.maximum(scale, 1.0)
        i = int(np.argmin(rel))
        if rel[i] < -1e-10:
            raise CertificationError(
                "Yosida lower bound violated", witness={"eps": eps, "x": pts[i].tolist()}
            )
        worst = min(worst, float(slack[i]))
    return YosidaLowerBound(a=a, m1=float(m1), m2=float(m2), worst_slack=worst)


# -- operator sequences ------------------------------------------------------


def shifted(spec, beta):
    """``spec + beta I`` kept inside the closed catalog."""
    if beta == 0:
        return spec
    if isinstance(spec, Zero):
        return Linear(beta * np.eye(spec.dimension))
    if isinstance(spec, Linear):
        return Linear(spec.matrix + beta * np.eye(spec.dimension))
    if isinstance(spec, NormalCone):
        return NormalConePlusLinear(spec.set, beta)
    if isinstance(spec, NormalConePlusLinear):
        return NormalConePlusLinear(spec.set, spec.beta + beta)
    raise InputError(f"{type(spec).__name__} + beta*I has no closed-form resolvent here")


@dataclass(frozen=True)
class OperatorSequence:
    """Family ``A^n``: either ``base + (c/n) I`` or the constant family ``A^n = base``."""

    base: object
    c: float = 0.0
    rule: str = "linear_shift"
    kappa: float = 1.0

    def __post_init__(self):
        if self.rule not in ("linear_shift", "constant"):
            raise InputError(f"unknown operator family rule {self.rule!r}")
        if not self.c >= 0 or not self.kappa > 0:
            raise InputError("need c >= 0 and kappa > 0")
        shifted(self.base, self.c)  # fails early on unsupported bases

    @property
    def dimension(self):
        return self.base.dimension

    def at(self, n):
        if n < 1:
            raise ParameterError("sequence index starts at 1")
        if self.rule == "constant" or self.c == 0:
            return self.base
        return shifted(self.base, self.c / n)

    def local_bound(self):
        """``gamma = sup_n sup{|y| : y in A^n(x), |x| <= kappa}``.

        Returns ``math.inf`` when the closed kappa-ball is not inside the
        interior of D(A), i.e. when the local boundedness hypothesis fails.
        """
        d, k = self.dimension, self.kappa
        shift = 0.0 if self.rule == "constant" else self.c * k
        base = self.base
        c = constraint_set(base)
        if c is not None and not _ball_in_interior(c, k):
            return math.inf
        if isinstance(base, (Zero, NormalCone)):
            return shift
        if isinstance(base, NormalConePlusLinear):
            return base.beta * k + shift
        if isinstance(base, Linear):
            return float(np.linalg.norm(base.matrix, 2)) * k + shift
        return base.weight * math.sqrt(d) + shift


def _ball_in_interior(c, radius):
    if isinstance(c, Box):
        return bool(np.all(c.lower < -radius) and np.all(c.upper > radius))
    if isinstance(c, Ball):
        return bool(np.linalg.norm(c.center) + radius < c.radius)
    return bool(c.offset > radius)


def yosida_uniform_convergence(seq, eps, grid, n):
    """``max_x |A^n_eps(x) - A_eps(x)|`` over a finite grid in closure(D(A))."""
    grid = _as_points(np.atleast_2d(np.asarray(grid, dtype=float)), seq.dimension)
    if grid.shape[0] == 0:
        raise InputError("grid must be nonempty")
    if not np.all(in_domain(seq.base, grid)):
        raise InputError("grid points must lie in the closure of D(A)")
    dev = yosida(seq.at(n), eps, grid) - yosida(seq.base, eps, grid)
    return float(np.max(np.linalg.norm(dev, axis=-1)))
