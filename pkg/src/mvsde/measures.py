"""Uniformly weighted point clouds and their Wasserstein distances."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapabilityError, InputError, ParameterError

MAX_ASSIGNMENT_SIZE = 512


class ParticleCloud:
    """Empirical measure ``(1/N) sum_i delta_{x_i}`` on R^d.

    Points are stored as a read-only ``(N, d)`` float array.  A 1-D sequence
    is read as N points on the line.
    """

    __slots__ = ("points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise InputError(f"cloud needs shape (N, d) with N, d >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("cloud points must be finite")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def mean(self):
        return self.points.mean(axis=0)

    def second_moment(self):
        """``||mu||_2^2``."""
        return float(np.mean(np.sum(self.points**2, axis=1)))

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"ParticleCloud(N={self.n}, d={self.dimension})"


def as_cloud(obj):
    return obj if isinstance(obj, ParticleCloud) else ParticleCloud(obj)


@dataclass(frozen=True)
class DistanceReport:
    value: float
    method: str
    n_a: int
    n_b: int

    def __float__(self):
        return self.value


def moment_norm(cloud, theta):
    """``((1/N) sum |x_i|^theta)^{1/theta}`` for ``theta >= 1``."""
    if not theta >= 1:
        raise ParameterError(f"theta must be >= 1, got {theta}")
    cloud = as_cloud(cloud)
    r = np.linalg.norm(cloud.points, axis=1)
    return float(np.mean(r**theta) ** (1.0 / theta))


def _sorted_pair(a, b):
    a, b = as_cloud(a), as_cloud(b)
    if a.dimension != 1 or b.dimension != 1:
        raise InputError("sorted transport needs 1-D clouds")
    if a.n != b.n:
        raise InputError(f"clouds must have equal sizes, got {a.n} and {b.n}")
    return np.sort(a.points[:, 0]), np.sort(b.points[:, 0]), a.n


def w2_sorted_1d(a, b):
    """Exact W2 on the line via the sorted (monotone) coupling."""
    xa, xb, n = _sorted_pair(a, b)
    return DistanceReport(math.sqrt(float(np.mean((xa - xb) ** 2))), "sorted-1d", n, n)


def w1_sorted_1d(a, b):
    xa, xb, _ = _sorted_pair(a, b)
    return float(np.mean(np.abs(xa - xb)))


def squared_cost(a, b):
    diff = a.points[:, None, :] - b.points[None, :, :]
    return np.sum(diff**2, axis=-1)


def optimal_matching(a, b):
    """Permutation ``perm`` so that pairing ``a[i]`` with ``b[perm[i]]`` is W2-optimal."""
    a, b = as_cloud(a), as_cloud(b)
    if a.dimension != b.dimension:
        raise InputError("clouds live in different dimensions")
    if a.n != b.n:
        raise InputError(f"clouds must have equal sizes, got {a.n} and {b.n}")
    if a.dimension == 1:
        perm = np.empty(a.n, dtype=int)
        perm[np.argsort(a.points[:, 0], kind="stable")] = np.argsort(b.points[:, 0], kind="stable")
        return perm
    if a.n > MAX_ASSIGNMENT_SIZE:
        raise CapabilityError(
            f"exact assignment limited to N <= {MAX_ASSIGNMENT_SIZE}; use 1-D experiments"
        )
    rows, cols = linear_sum_assignment(squared_cost(a, b))
    perm = np.empty(a.n, dtype=int)
    perm[rows] = cols
    return perm


def w2_exact_assignment(a, b):
    """Exact W2 through a minimum-cost perfect matching on squared distances."""
    a, b = as_cloud(a), as_cloud(b)
    if a.dimension != b.dimension:
        raise InputError("clouds live in different dimensions")
    if a.n != b.n:
        raise InputError(f"clouds must have equal sizes, got {a.n} and {b.n}")
    if a.n > MAX_ASSIGNMENT_SIZE:
        raise CapabilityError(
            f"exact assignment limited to N <= {MAX_ASSIGNMENT_SIZE}; use 1-D experiments"
        )
    cost = squared_cost(a, b)
    rows, cols = linear_sum_assignment(cost)
    # fsum is exactly rounded, so W2(a, b) == W2(b, a) bit for bit
    return DistanceReport(math.sqrt(math.fsum(cost[rows, cols]) / a.n), "exact-assignment",
                          a.n, b.n)


def w2(a, b):
    """W2 with the cheapest exact method for the dimension."""
    a = as_cloud(a)
    if a.dimension == 1:
        return w2_sorted_1d(a, b).value
    return w2_exact_assignment(a, b).value


def w1(a, b):
    a, b = as_cloud(a), as_cloud(b)
    if a.dimension == 1:
        return w1_sorted_1d(a, b)
    if a.n > MAX_ASSIGNMENT_SIZE:
        raise CapabilityError(f"exact assignment limited to N <= {MAX_ASSIGNMENT_SIZE}")
    cost = np.sqrt(squared_cost(a, b))
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(cost[rows, cols]) / a.n


def quantile(cloud, q):
    """Order statistic ``x_(ceil(qN))`` with the index clamped to ``[1, N]``."""
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"q must lie in [0, 1], got {q}")
    cloud = as_cloud(cloud)
    if cloud.dimension != 1:
        raise InputError("quantile needs a 1-D cloud")
    xs = np.sort(cloud.points[:, 0])
    k = min(max(math.ceil(q * cloud.n), 1), cloud.n)
    return float(xs[k - 1])


def cloud_to_csv_rows(cloud):
    """Header-less snapshot rows ``x1,...,xd``."""
    return [",".join(repr(float(v)) for v in row) for row in as_cloud(cloud).points]


def cloud_from_csv(text):
    rows = [line for line in text.splitlines() if line.strip()]
    return ParticleCloud([[float(v) for v in line.split(",")] for line in rows])
