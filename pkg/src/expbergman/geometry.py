"""Geometry of the Hessian metric of psi(z) = 1/(1-|z|^2) on the unit ball B_n.

Points are complex numpy arrays of shape ``(n,)``; batches have shape ``(N, n)``.
The inner product is ``<a, b> = sum(a_j * conj(b_j))``.

The distance ``sigma`` has no closed form. It is handled as a certified
interval: upper bounds come from explicit curves, lower bounds from
comparison arguments that hold for every curve.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize
from scipy.linalg import null_space
from scipy.spatial import cKDTree

from .errors import (
    BoundaryError,
    InsufficientResolution,
    QuadratureDivergence,
    RadiusWarning,
    SeparationUncertain,
)

EPS_BOUNDARY = 1e-12
C0 = 0.25
MAX_RADIUS = C0 / 20
DELTA_MARGIN = 1.05
COVER_SLACK = 0.25
GL_ORDER = 16
UNKNOWN_LIMIT = 0.10

_x, _w = np.polynomial.legendre.leggauss(GL_ORDER)
GL_NODES = 0.5 * (_x + 1.0)
GL_WEIGHTS = 0.5 * _w
del _x, _w


# ---------------------------------------------------------------------------
# points and elementary functions


def as_point(z) -> np.ndarray:
    """Validate ``z`` as a point of B_n and return it as a complex vector."""
    z = np.array(z, dtype=complex)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.ndim != 1 or z.size == 0:
        raise ValueError(f"a point must be a non-empty 1-d vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("point has non-finite coordinates")
    if np.linalg.norm(z) >= 1.0 - EPS_BOUNDARY:
        raise BoundaryError(f"|z| = {np.linalg.norm(z)!r} is not < 1 - {EPS_BOUNDARY}")
    return z


def as_points(W, n: int | None = None) -> np.ndarray:
    """Validate a batch of points, returning a complex ``(N, n)`` array."""
    W = np.array(W, dtype=complex)
    if W.ndim == 1:
        W = W.reshape(1, -1) if n is None or W.size == n else W.reshape(-1, 1)
    if W.ndim != 2:
        raise ValueError(f"expected a (N, n) batch, got shape {W.shape}")
    if n is not None and W.shape[1] != n:
        raise ValueError(f"dimension mismatch: expected n={n}, got {W.shape[1]}")
    if not np.all(np.isfinite(W)):
        raise ValueError("batch has non-finite coordinates")
    if W.size and np.max(np.linalg.norm(W, axis=1)) >= 1.0 - EPS_BOUNDARY:
        raise BoundaryError("batch contains points outside the admissible ball")
    return W


def inner(a, b):
    """``<a, b>`` along the last axis."""
    return np.sum(a * np.conj(b), axis=-1)


def defect(z):
    """``1 - |z|^2`` along the last axis."""
    z = np.asarray(z)
    return 1.0 - np.sum(z.real**2 + z.imag**2, axis=-1)


def psi(z):
    """The weight exponent ``1/(1-|z|^2)``; vectorised over leading axes."""
    return 1.0 / defect(np.asarray(z, dtype=complex))


# ---------------------------------------------------------------------------
# closed-form Hessian objects
#
# The matrices below act on column vectors: entry (j, k) is
# d^2 psi / (d conj(z_j) d z_k), so that <H v, v> is the Levi form of psi.
# This is the transpose of the (j, k) = d^2 psi / (d z_j d conj(z_k)) layout;
# the two agree for real z.


def _outer(z):
    return np.outer(z, np.conj(z))


def hessian(z) -> np.ndarray:
    z = as_point(z)
    u = defect(z)
    n = z.size
    return (u * np.eye(n) + 2.0 * _outer(z)) / u**3


def hessian_inverse(z) -> np.ndarray:
    """Closed-form inverse ``(1-|z|^2)^2 (I - 2/(1+|z|^2) A(z))``."""
    z = as_point(z)
    u = defect(z)
    r2 = 1.0 - u
    return u**2 * (np.eye(z.size) - 2.0 / (1.0 + r2) * _outer(z))


def hessian_det(z, verify: bool = False) -> float:
    """``(1+|z|^2) / (1-|z|^2)^(2n+1)``.

    With ``verify=True`` the closed form is also compared against a dense
    LU determinant and an ``ArithmeticError`` is raised on a relative
    disagreement above 1e-8.
    """
    z = as_point(z)
    u = defect(z)
    closed = (2.0 - u) / u ** (2 * z.size + 1)
    if verify:
        numeric = np.linalg.det(hessian(z)).real
        if abs(numeric - closed) > 1e-8 * closed:
            raise ArithmeticError(f"determinant mismatch: {numeric} vs {closed}")
    return float(closed)


@dataclass(frozen=True)
class SpectralForm:
    radial: float
    tangential: float
    P: np.ndarray
    Q: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.radial * self.P + self.tangential * self.Q


def projectors(z) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projections onto ``C z`` and its complement (``P_0 = 0``)."""
    z = as_point(z)
    n = z.size
    scale = float(np.max(np.abs(z)))
    if scale == 0.0:
        return np.zeros((n, n), dtype=complex), np.eye(n, dtype=complex)
    v = z.real / scale + 1j * (z.imag / scale)  # componentwise: tiny |z| cannot underflow
    P = _outer(v / np.linalg.norm(v))
    return P, np.eye(n) - P


def hessian_spectral(z) -> SpectralForm:
    """Eigen-decomposition of the Hessian into radial and tangential parts.

    At ``z = 0`` the projector convention ``P_0 = 0`` is used and the radial
    eigenvalue is reported as 1.
    """
    z = as_point(z)
    u = defect(z)
    P, Q = projectors(z)
    radial = (2.0 - u) / u**3 if np.any(z) else 1.0
    return SpectralForm(float(radial), float(1.0 / u**2), P, Q)


def metric_sq(z, v):
    """Squared Hessian length of tangent vectors ``v`` at base points ``z``."""
    u = defect(z)
    zv = inner(v, z)
    vv = np.sum(v.real**2 + v.imag**2, axis=-1)
    return vv / u**2 + 2.0 * (zv.real**2 + zv.imag**2) / u**3


# ---------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class Polyline:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = as_points(self.nodes)
        if nodes.shape[0] < 2:
            raise ValueError("a polyline needs at least two nodes")
        object.__setattr__(self, "nodes", nodes)


def _segment_lengths(A, B, max_pieces: int = 4096) -> np.ndarray:
    """Hessian lengths of straight segments ``A[k] -> B[k]``.

    Each segment is split into pieces no longer than a quarter of the
    smaller endpoint defect, with Gauss-Legendre of order 16 per piece.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    D = B - A
    span = np.linalg.norm(D, axis=1)
    floor = np.minimum(defect(A), defect(B))
    if np.any(floor <= 0):
        raise QuadratureDivergence("segment endpoint outside the ball")
    pieces = int(min(max_pieces, max(1, np.ceil(np.max(span / (0.25 * floor)) if span.size else 1))))
    t = ((np.arange(pieces)[:, None] + GL_NODES[None, :]) / pieces).ravel()
    wts = np.tile(GL_WEIGHTS, pieces) / pieces
    out = np.empty(A.shape[0])
    chunk = max(1, 400_000 // (t.size * A.shape[1]))
    for s in range(0, A.shape[0], chunk):
        a, d = A[s : s + chunk], D[s : s + chunk]
        pts = a[:, None, :] + t[None, :, None] * d[:, None, :]
        if np.any(defect(pts) <= 0):
            raise QuadratureDivergence("quadrature node left the unit ball")
        integrand = np.sqrt(metric_sq(pts, d[:, None, :]))
        out[s : s + chunk] = integrand @ wts
    return out


def curve_length(gamma) -> float:
    """Hessian length of a polyline, summed over its straight segments."""
    nodes = gamma.nodes if isinstance(gamma, Polyline) else Polyline(gamma).nodes
    return float(_segment_lengths(nodes[:-1], nodes[1:]).sum())


def euclidean_weighted_length(gamma) -> float:
    """``int |gamma'| / (1-|gamma|^2) dt``, a lower bound for the Hessian length."""
    nodes = gamma.nodes if isinstance(gamma, Polyline) else Polyline(gamma).nodes
    A, D = nodes[:-1], nodes[1:] - nodes[:-1]
    pts = A[:, None, :] + GL_NODES[None, :, None] * D[:, None, :]
    vals = np.linalg.norm(D, axis=1)[:, None] / defect(pts)
    return float((vals @ GL_WEIGHTS).sum())


# ---------------------------------------------------------------------------
# certified lower bounds for sigma


def _radial_potential(u):
    # antiderivative of sqrt(u + 2) / (2 u^{3/2}); along any curve the
    # Hessian length dominates |d G(1 - |gamma|^2)|
    u = np.asarray(u, dtype=float)
    return np.arccosh(np.sqrt((u + 2.0) / 2.0)) - np.sqrt((u + 2.0) / u)


_EPS_GRID = np.geomspace(1e-6, 0.999, 128)
_DELTA_GRID = np.geomspace(1e-7, 2.0, 64)
_ETA_GRID = np.concatenate([np.geomspace(1e-3, 0.5, 8), [0.75, 0.9]])
_ELL_GRID = np.geomspace(1e-8, 4.0, 480)


@dataclass(frozen=True)
class _Comparison:
    """Frozen-metric comparison data around one base point ``z``.

    For each (delta, eps) the region R = {|w - z| <= delta, L <= 1-|w|^2 <= U}
    is left only by curves of Hessian length >= ``exit_cost``, and inside R
    the metric dominates ``m * H(z)``. Hence a curve of length < l stays where
    ``H >= m(l) H(z)`` with ``m(l)`` the best ``m`` over regions with exit cost
    >= l, and the ``H(z)``-displacement ``q`` of a curve of length ``L`` obeys
    ``q <= F(L) = int_0^L dl / sqrt(m(l))``. ``F`` is tabulated on ``ell`` as
    an upper envelope so that ``F^{-1}(q)`` is a certified lower bound.
    """

    delta: np.ndarray  # (I,)
    exit_cost: np.ndarray  # (I, J)
    ell: np.ndarray  # (K,)
    m_ell: np.ndarray  # (K,)
    F: np.ndarray  # (K,)

    def lower(self, q) -> np.ndarray:
        """Certified lower bound on the length of a curve with displacement ``q``."""
        q = np.asarray(q, dtype=float)
        k = np.searchsorted(self.F, q, side="right")
        kk = np.minimum(k, self.F.size - 1)
        prev_F = np.where(k > 0, self.F[np.maximum(k - 1, 0)], 0.0)
        prev_l = np.where(k > 0, self.ell[np.maximum(k - 1, 0)], 0.0)
        out = prev_l + (q - prev_F) * np.sqrt(self.m_ell[kk])
        return np.where(k >= self.F.size, self.ell[-1], np.minimum(out, self.ell[np.minimum(k, self.F.size - 1)]))

    def displacement(self, r: float) -> float:
        """Upper bound on ``|w - z|_{H(z)}`` over ``w`` in ``B_H(z, r)``."""
        k = int(np.searchsorted(self.ell, r, side="left"))
        if k >= self.ell.size or self.m_ell[k] <= 0:
            raise InsufficientResolution(f"no comparison region certifies radius {r}")
        prev_F = self.F[k - 1] if k > 0 else 0.0
        prev_l = self.ell[k - 1] if k > 0 else 0.0
        return float(prev_F + (r - prev_l) / math.sqrt(self.m_ell[k]))


@lru_cache(maxsize=8192)
def _comparison_for(u: float) -> _Comparison:
    rho2 = 1.0 - u
    eps = _EPS_GRID
    L = u * (1.0 - eps)
    top = u * (1.0 + eps)
    U = np.minimum(top, 1.0)
    g0 = _radial_potential(u)
    face_lo = g0 - _radial_potential(L)
    with np.errstate(invalid="ignore"):
        face_hi = np.where(top < 1.0, _radial_potential(U) - g0, np.inf)
    face = np.minimum(face_lo, face_hi)
    delta = _DELTA_GRID[:, None]
    exit_cost = np.minimum(delta / U, face)

    # |<v,g>|^2 >= (1-eta)|<v,z>|^2 - (1/eta-1)|v|^2 delta^2, hence
    # |v|^2/u_g^2 + 2|<v,g>|^2/u_g^3 >= x/U^2 + max(0, beta*y - kappa*x) with
    # x = |v|^2, y = |<v,z>|^2 <= rho2 * x; compare with a*x + b*y at z.
    # The ratio is minimised at y = min(kappa/beta, rho2) or y = rho2.
    a, b = 1.0 / u**2, 2.0 / u**3
    eta = _ETA_GRID[:, None, None]
    kappa = 2.0 * (1.0 / eta - 1.0) * delta[None] ** 2 / U**3
    beta = 2.0 * (1.0 - eta) / U**3
    inv_u2 = 1.0 / U**2
    y0 = np.minimum(kappa / beta, rho2)
    c_kink = inv_u2 / (a + b * y0)
    c_end = (inv_u2 + np.maximum(0.0, beta * rho2 - kappa)) / (a + b * rho2)
    m = np.clip(np.minimum(c_kink, c_end).max(axis=0), 0.0, 1.0)

    # m(l) = max{m_ij : exit_ij >= l}, a nonincreasing step function
    order = np.argsort(-exit_cost, axis=None)
    ex_sorted = exit_cost.ravel()[order]
    m_cum = np.maximum.accumulate(m.ravel()[order])
    cnt = np.searchsorted(-ex_sorted, -_ELL_GRID, side="right")
    m_ell = np.where(cnt > 0, m_cum[np.maximum(cnt - 1, 0)], 0.0)
    steps = np.diff(np.concatenate([[0.0], _ELL_GRID]))
    with np.errstate(divide="ignore"):
        F = np.cumsum(steps / np.sqrt(m_ell))
    return _Comparison(_DELTA_GRID, exit_cost, _ELL_GRID, m_ell, F)


def _comparison(z) -> _Comparison:
    return _comparison_for(float(defect(z)))


def _pair_data(z, W):
    D = W - z
    d = np.linalg.norm(D, axis=1)
    uw = defect(W)
    q = np.sqrt(metric_sq(z, D))
    return d, uw, q


def _elementary_lower(z, d, uw):
    u = float(defect(z))
    s = np.maximum(d / u, d / uw)
    step1 = 0.5 * np.minimum(s, C0 / 10.0)
    radial = np.abs(_radial_potential(u) - _radial_potential(uw))
    return np.maximum.reduce([d, step1, radial])


def sigma_lower(z, W) -> np.ndarray:
    """Certified lower bounds for ``sigma(z, w)`` over a batch ``W``.

    The maximum of: the Euclidean distance; the bound
    ``1/2 min{s, C0/10}`` with ``s = |z-w| / (1-|z|^2)`` symmetrised in
    ``z, w``; the radial potential difference; and the integrated
    frozen-metric comparison (see :class:`_Comparison`).
    """
    z = as_point(z)
    W = as_points(W, z.size)
    d, uw, q = _pair_data(z, W)
    return np.maximum(_elementary_lower(z, d, uw), _comparison(z).lower(q))


def _defect_ceiling(u: float, r: float) -> float:
    """Largest ``1-|w|^2`` reachable from defect ``u`` by a curve of length < r."""
    target = float(_radial_potential(u)) + r
    if not float(_radial_potential(1.0)) > target:
        return 1.0
    return optimize.brentq(lambda t: float(_radial_potential(t)) - target, u, 1.0, xtol=1e-15, rtol=1e-12) * (1 + 1e-9)


def euclidean_reach(z, r: float) -> float:
    """A Euclidean radius ``R`` with ``B_H(z, r)`` contained in ``B(z, R)``.

    Along a curve ``|gamma'| <= (1-|gamma|^2) |gamma'|_H``, and the defect
    is capped through the radial potential, giving ``R = r * U``; for
    ``r <= 1/80`` the Euclidean step bound ``2 r (1-|z|^2)`` also applies.
    """
    u = float(defect(as_point(z)))
    reach = r * _defect_ceiling(u, r)
    if r <= MAX_RADIUS:
        reach = min(reach, 2.0 * r * u)
    return reach


def _certified_outside(z, W, r) -> np.ndarray:
    d, uw, q = _pair_data(z, W)
    out = _elementary_lower(z, d, uw) >= r
    try:
        out |= q >= _comparison(z).displacement(r)
    except InsufficientResolution:
        pass
    return out


# ---------------------------------------------------------------------------
# upper bounds for sigma


def _upper_batch(z, W) -> np.ndarray:
    """Minimum over the straight segment and the two-leg path via ``P_z w``."""
    n = W.shape[0]
    Z = np.broadcast_to(z, W.shape)
    best = _segment_lengths(Z, W)
    r2 = float(np.vdot(z, z).real)
    if r2 > 0.0:
        Pw = (inner(W, z) / r2)[:, None] * z[None, :]
        two = _segment_lengths(Z, Pw) + _segment_lengths(Pw, W)
        best = np.minimum(best, two)
    return best.reshape(n)


def _real_directions(n: int) -> np.ndarray:
    E = np.eye(n, dtype=complex)
    return np.concatenate([E, 1j * E, -E, -1j * E])


def _resample(nodes, count):
    """Resample a polyline to ``count + 2`` nodes equally spaced in parameter."""
    s = np.linspace(0.0, nodes.shape[0] - 1, count + 2)
    idx = np.minimum(np.floor(s).astype(int), nodes.shape[0] - 2)
    frac = (s - idx)[:, None]
    return nodes[idx] * (1 - frac) + nodes[idx + 1] * frac


def _descend(z, w, interior: int, budget: int, start=None):
    """Cyclic coordinate descent on the interior nodes of a polyline."""
    nodes = _resample(start if start is not None else np.stack([z, w]), interior)
    seg = _segment_lengths(nodes[:-1], nodes[1:])
    moves = _real_directions(z.size)
    scale = float(np.linalg.norm(w - z))
    h = 0.25 * scale / (interior + 1)
    tol = 1e-6 * scale
    converged = False
    for _ in range(budget):
        improved = False
        for k in range(1, interior + 1):
            trial = nodes[k] + h * moves
            ok = defect(trial) > 2 * EPS_BOUNDARY
            if not np.any(ok):
                continue
            trial = trial[ok]
            left = _segment_lengths(np.broadcast_to(nodes[k - 1], trial.shape), trial)
            right = _segment_lengths(trial, np.broadcast_to(nodes[k + 1], trial.shape))
            total = left + right
            j = int(np.argmin(total))
            if total[j] < seg[k - 1] + seg[k] - 1e-15 * (seg[k - 1] + seg[k]):
                nodes[k] = trial[j]
                seg[k - 1], seg[k] = left[j], right[j]
                improved = True
        if not improved:
            h *= 0.5
            if h < tol:
                converged = True
                break
    return float(seg.sum()), converged, nodes


class Status(enum.Enum):
    RESOLVED = "Resolved"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class DistanceEstimate:
    lower: float
    upper: float
    status: Status

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def overlaps(self, other: "DistanceEstimate") -> bool:
        return self.lower <= other.upper and other.lower <= self.upper


NODE_SCHEDULE = (8, 16, 32, 64)


def sigma_estimate(z, w, budget: int = 64) -> DistanceEstimate:
    """Certified interval around the Hessian distance ``sigma(z, w)``.

    ``budget`` is the number of descent sweeps allowed per node count; the
    node count starts at 8 and doubles up to 64 while the descent does not
    converge.
    """
    z, w = as_point(z), as_point(w)
    if z.size != w.size:
        raise ValueError("points live in different dimensions")
    if np.array_equal(z, w):
        return DistanceEstimate(0.0, 0.0, Status.RESOLVED)
    lower = float(sigma_lower(z, w[None])[0])
    upper = float(_upper_batch(z, w[None])[0])
    status = Status.BUDGET_EXHAUSTED
    path = None
    for interior in NODE_SCHEDULE:
        length, converged, path = _descend(z, w, interior, budget, start=path)
        upper = min(upper, length)
        if converged:
            status = Status.RESOLVED
            break
    return DistanceEstimate(min(lower, upper), upper, status)


# ---------------------------------------------------------------------------
# regions


class Membership(enum.IntEnum):
    OUTSIDE = -1
    UNKNOWN = 0
    INSIDE = 1


@dataclass(frozen=True)
class RegionQuery:
    """A ball query ``B_H(center, radius)`` (``kind='BH'``) or ``D_psi`` (``kind='D'``)."""

    center: np.ndarray
    radius: float
    kind: str = "BH"

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kind not in ("BH", "D"):
            raise ValueError(f"unknown region kind {self.kind!r}")

    @property
    def flagged(self) -> bool:
        return self.radius > MAX_RADIUS


def _warn_radius(r):
    if r > MAX_RADIUS:
        warnings.warn(f"radius {r} exceeds {MAX_RADIUS}; inclusion theorems not claimed", RadiusWarning, stacklevel=3)


def in_D(z, w, r: float):
    """Membership in ``D_psi(z, r)``; ``w`` may be a single point or a batch."""
    z = as_point(z)
    single = np.ndim(w) == 1
    W = as_points(w, z.size)
    u = float(defect(z))
    P, Q = projectors(z)
    radial = np.linalg.norm(z[None, :] - W @ P.T, axis=1)
    tangential = np.linalg.norm(W @ Q.T, axis=1)
    res = (radial < r * u**1.5) & (tangential < r * u)
    return bool(res[0]) if single else res


def volume_D(z, r: float) -> float:
    """Lebesgue volume of ``D_psi(z, r)`` in real dimension 2n."""
    z = as_point(z)
    n = z.size
    u = float(defect(z))
    if not np.any(z):
        return math.pi**n / math.factorial(n) * r ** (2 * n)
    disk = math.pi * (r * u**1.5) ** 2
    return disk * math.pi ** (n - 1) / math.factorial(n - 1) * (r * u) ** (2 * n - 2)


def _frame(z):
    """Unit radial direction and an orthonormal basis of its complement."""
    n = z.size
    nz = np.linalg.norm(z)
    e = z / nz if nz > 0 else np.eye(n, dtype=complex)[0]
    rest = null_space(e.conj()[None, :]) if n > 1 else np.zeros((1, 0), dtype=complex)
    return e, rest


def _unit_ball(rng, size, dim):
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((size, 1)) ** (1.0 / dim)


def sample_D(z, r: float, size: int, rng) -> np.ndarray:
    """Uniform samples of ``D_psi(z, r)`` in its product coordinates.

    Samples falling outside the unit ball are dropped.
    """
    z = as_point(z)
    n = z.size
    u = float(defect(z))
    if not np.any(z):
        x = _unit_ball(rng, size, 2 * n) * r
        W = x[:, :n] + 1j * x[:, n:]
    else:
        e, rest = _frame(z)
        disk = _unit_ball(rng, size, 2) * (r * u**1.5)
        W = z[None, :] + (disk[:, 0] + 1j * disk[:, 1])[:, None] * e[None, :]
        if n > 1:
            t = _unit_ball(rng, size, 2 * n - 2) * (r * u)
            W = W + (t[:, : n - 1] + 1j * t[:, n - 1 :]) @ rest.T
    return W[defect(W) > EPS_BOUNDARY * 4]


def _ellipsoid_axes(z, R):
    u = float(defect(z))
    rho2 = 1.0 - u
    return R * u**1.5 / math.sqrt(1.0 + rho2), R * u


def ellipsoid_volume(z, R: float) -> float:
    """Volume of ``{w : |w - z|_{H(z)} < R}``."""
    z = as_point(z)
    n = z.size
    a, b = _ellipsoid_axes(z, R)
    return math.pi**n / math.factorial(n) * a**2 * b ** (2 * n - 2)


def sample_ellipsoid(z, R: float, size: int, rng) -> np.ndarray:
    """Uniform samples of the frozen-metric ellipsoid of radius ``R`` at ``z``.

    Points outside the unit ball are kept; callers mask them.
    """
    z = as_point(z)
    n = z.size
    a, b = _ellipsoid_axes(z, R)
    e, rest = _frame(z)
    x = _unit_ball(rng, size, 2 * n)
    W = z[None, :] + (a * (x[:, 0] + 1j * x[:, 1]))[:, None] * e[None, :]
    if n > 1:
        W = W + b * (x[:, 2 : n + 1] + 1j * x[:, n + 1 :]) @ rest.T
    return W


def classify(z, W, r: float, refine: int = 0, budget: int = 32) -> np.ndarray:
    """Three-valued membership of a batch in ``B_H(z, r)``.

    Returns an int8 array of :class:`Membership` values. Up to ``refine``
    undecided points are retried with polyline descent.
    """
    z = as_point(z)
    W = as_points(W, z.size)
    codes = np.zeros(W.shape[0], dtype=np.int8)
    if W.shape[0] == 0:
        return codes
    outside = _certified_outside(z, W, r)
    codes[outside] = Membership.OUTSIDE
    rest = np.flatnonzero(~outside)
    if rest.size:
        inside = _upper_batch(z, W[rest]) < r
        codes[rest[inside]] = Membership.INSIDE
    pending = np.flatnonzero(codes == Membership.UNKNOWN)[:refine]
    for k in pending:
        length, _, _ = _descend(z, W[k], NODE_SCHEDULE[0], budget)
        if length < r:
            codes[k] = Membership.INSIDE
    return codes


def in_BH(z, w, r: float, budget: int = 64) -> Membership:
    """Sound three-valued test for ``sigma(z, w) < r``."""
    z, w = as_point(z), as_point(w)
    code = classify(z, w[None], r)[0]
    if code != Membership.UNKNOWN:
        return Membership(int(code))
    est = sigma_estimate(z, w, budget)
    if est.upper < r:
        return Membership.INSIDE
    if est.lower >= r:
        return Membership.OUTSIDE
    return Membership.UNKNOWN


@dataclass(frozen=True)
class InclusionAudit:
    """Counts of sampled points contradicting ``D(z, r/10) < B_H(z, r) < D(z, 18 r)``."""

    inner_checked: int
    inner_violations: int  # points of D(z, r/10) certified Outside
    outer_checked: int
    outer_violations: int  # points outside D(z, 18 r) certified Inside

    @property
    def violations(self) -> int:
        return self.inner_violations + self.outer_violations


def inclusion_audit(z, r: float, samples: int, rng, margin: float = DELTA_MARGIN) -> InclusionAudit:
    """Classify samples near both comparison regions against ``B_H(z, r)``."""
    z = as_point(z)
    inner = sample_D(z, r / (10.0 * margin), samples, rng)
    outer = sample_D(z, 36.0 * r * margin, 4 * samples, rng)
    outer = outer[~in_D(z, outer, 18.0 * r * margin)][:samples]
    ci = classify(z, inner, r) if inner.size else np.zeros(0, dtype=np.int8)
    co = classify(z, outer, r) if outer.size else np.zeros(0, dtype=np.int8)
    return InclusionAudit(
        int(inner.shape[0]), int(np.sum(ci == Membership.OUTSIDE)),
        int(outer.shape[0]), int(np.sum(co == Membership.INSIDE)),
    )


def bounding_scale(z, r: float) -> float:
    """Factor ``s`` with ``B_H(z, r)`` inside the ellipsoid of radius ``s * r``."""
    return _comparison(as_point(z)).displacement(r) / r


@dataclass(frozen=True)
class BallSample:
    """Uniform samples of a certified bounding ellipsoid, classified against ``B_H``."""

    points: np.ndarray
    codes: np.ndarray
    bounding_volume: float
    seed: int

    @property
    def unknown_fraction(self) -> float:
        return float(np.mean(self.codes == Membership.UNKNOWN)) if self.codes.size else 0.0

    @property
    def hits(self) -> np.ndarray:
        return (self.codes == Membership.INSIDE) + 0.5 * (self.codes == Membership.UNKNOWN)


def sample_ball(z, r: float, samples: int, seed: int, refine: int = 64, budget: int = 16) -> BallSample:
    """Draw and classify uniform points covering ``B_H(z, r)``.

    Raises :class:`InsufficientResolution` when more than 10% of the samples
    stay undecided after refinement.
    """
    z = as_point(z)
    _warn_radius(r)
    rng = np.random.default_rng([seed, 7001])
    R = bounding_scale(z, r) * r
    W = sample_ellipsoid(z, R, samples, rng)
    codes = np.full(samples, Membership.OUTSIDE, dtype=np.int8)
    ok = defect(W) > 4 * EPS_BOUNDARY
    codes[ok] = classify(z, W[ok], r, refine=refine, budget=budget)
    out = BallSample(W, codes, ellipsoid_volume(z, R), seed)
    if out.unknown_fraction > UNKNOWN_LIMIT:
        raise InsufficientResolution(f"{out.unknown_fraction:.1%} of samples undecided at z={z}, r={r}")
    return out


def ball_volume(z, r: float, samples: int = 20000, seed: int = 0, refine: int = 64):
    """Monte Carlo volume of ``B_H(z, r)``.

    Samples are uniform in the frozen-metric ellipsoid that certifiably
    contains the ball; undecided samples count 1/2 and widen the error.
    """
    from .quadrature import IntegralResult

    bs = sample_ball(z, r, samples, seed, refine=refine)
    hits = bs.hits
    V = bs.bounding_volume
    stderr = math.hypot(V * hits.std(ddof=1) / math.sqrt(hits.size), V * bs.unknown_fraction / math.sqrt(12.0))
    return IntegralResult(V * float(hits.mean()), stderr, "montecarlo-ellipsoid", seed, samples)


# ---------------------------------------------------------------------------
# lattices


@dataclass(frozen=True)
class Window:
    """Euclidean ball ``B(center, radius)`` restricting a lattice to a patch."""

    center: np.ndarray
    radius: float

    def contains(self, W, margin: float = 0.0) -> np.ndarray:
        return np.linalg.norm(W - self.center, axis=1) < self.radius - margin


@dataclass(frozen=True)
class Lattice:
    centers: np.ndarray
    radius: float
    overlap_bound: int
    max_modulus: float
    window: Window | None = None

    @property
    def n(self) -> int:
        return self.centers.shape[1]

    def contains(self, W, margin: float = 0.0) -> np.ndarray:
        ok = np.linalg.norm(W, axis=1) < self.max_modulus - margin
        if self.window is not None:
            ok &= self.window.contains(W, margin)
        return ok


def _model_volume(r, u, rho2, n):
    return math.pi**n / math.factorial(n) * r ** (2 * n) * u ** (2 * n + 1) / (1.0 + rho2)


def _shell_points(rng, n, lo, hi, size):
    g = rng.standard_normal((size, 2 * n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = (lo ** (2 * n) + rng.random(size) * (hi ** (2 * n) - lo ** (2 * n))) ** (1.0 / (2 * n))
    x = g * rad[:, None]
    return x[:, :n] + 1j * x[:, n:]


def candidate_cloud(r, density_per_shell, seed, n=1, max_modulus=0.9, window=None, shells=24):
    """Shell-stratified candidate points for lattice construction.

    Shell ``k`` receives about ``density_per_shell`` candidates per model
    ball volume, so counts scale like ``(1-|z|^2)^-(2n+1)`` times shell volume.
    """
    rng = np.random.default_rng([seed, 7002])
    edges = np.linspace(0.0, max_modulus, shells + 1)
    parts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        u = 1.0 - hi**2
        frac = 1.0
        if window is not None:
            probe = _shell_points(rng, n, lo, hi, 4096)
            frac = float(window.contains(probe).mean())
            if frac == 0.0:
                continue
        shell_vol = math.pi**n / math.factorial(n) * (hi ** (2 * n) - lo ** (2 * n))
        target = int(math.ceil(density_per_shell * frac * shell_vol / _model_volume(r, u, hi**2, n)))
        got, tries = [], 0
        while sum(len(g) for g in got) < target and tries < 1000:
            batch = _shell_points(rng, n, lo, hi, max(256, 2 * target))
            if window is not None:
                batch = batch[window.contains(batch)]
            got.append(batch)
            tries += 1
        if got:
            parts.append(np.concatenate(got)[:target])
    cloud = np.concatenate(parts) if parts else np.zeros((0, n), dtype=complex)
    return cloud[rng.permutation(cloud.shape[0])]


def _realify(W):
    return np.concatenate([W.real, W.imag], axis=1)


class _CenterIndex:
    """Incrementally growing centre set with Euclidean radius queries.

    Each centre stores the ``H(a)``-displacement bound for ``B_H(a, r)`` so
    that separation from new points is certified from the centre's side.
    """

    def __init__(self, n, r):
        self.r = r
        self.points = np.zeros((0, n), dtype=complex)
        self.disp = np.zeros(0)
        self.tree = None
        self.indexed = 0

    def add(self, p):
        self.points = np.vstack([self.points, p[None, :]])
        try:
            d = _comparison(p).displacement(self.r)
        except InsufficientResolution:
            d = np.inf
        self.disp = np.append(self.disp, d)
        if self.points.shape[0] - self.indexed > 256:
            self.tree = cKDTree(_realify(self.points))
            self.indexed = self.points.shape[0]

    def near(self, p, radius):
        idx = []
        if self.tree is not None:
            idx = self.tree.query_ball_point(_realify(p[None, :])[0], radius)
        tail = self.points[self.indexed :]
        if tail.shape[0]:
            close = np.flatnonzero(np.linalg.norm(tail - p, axis=1) < radius) + self.indexed
            idx = list(idx) + close.tolist()
        return np.asarray(sorted(idx), dtype=int)


def _separated_from(c, A, disp, r, disp_c=None) -> np.ndarray:
    """Certify ``sigma(a, c) >= r`` for each centre ``a`` in ``A``.

    The comparison is based at ``a`` (displacement bounds ``disp``) and, if
    ``disp_c`` is given, also at ``c``; either certificate suffices.
    """
    d = np.linalg.norm(A - c, axis=1)
    ua, uc = defect(A), float(defect(c))
    s = np.maximum(d / ua, d / uc)
    elem = np.maximum.reduce([d, 0.5 * np.minimum(s, C0 / 10.0), np.abs(_radial_potential(ua) - _radial_potential(uc))])
    ok = (elem >= r) | (np.sqrt(metric_sq(A, c[None, :] - A)) >= disp)
    if disp_c is not None:
        ok |= np.sqrt(metric_sq(c, A - c[None, :])) >= disp_c
    return ok


def _query_radius(p, r):
    return euclidean_reach(p, r) * (1.0 + 1e-9)


def build_lattice(
    r: float,
    density_per_shell: float = 24,
    seed: int = 0,
    *,
    n: int = 1,
    max_modulus: float = 0.9,
    window: Window | None = None,
    shells: int = 24,
    probes: int = 400,
) -> Lattice:
    """Greedy maximal ``r``-separated subset of a stratified candidate cloud.

    A candidate is accepted only if every existing centre is certified to be
    at distance ``>= r``; otherwise it is dropped. The overlap bound is the
    largest number of centres whose ``4r`` ball contains a probe point.
    """
    _warn_radius(r)
    cloud = candidate_cloud(r, density_per_shell, seed, n, max_modulus, window, shells)
    index = _CenterIndex(n, r)
    for c in cloud:
        near = index.near(c, _query_radius(c, r))
        if near.size:
            A = index.points[near]
            if np.any(_upper_batch(c, A) < r):
                continue
            if not np.all(_separated_from(c, A, index.disp[near], r)):
                continue
        index.add(c)
    lattice = Lattice(index.points, r, 0, max_modulus, window)
    counts = lattice_counts(lattice, probe_cloud(lattice, probes, seed + 1, 4 * r), 4 * r)
    return Lattice(index.points, r, int(counts.max()) if counts.size else 0, max_modulus, window)


def probe_cloud(lattice: Lattice, size: int, seed: int, radius: float) -> np.ndarray:
    """Uniform probe points ``p`` of the lattice region whose ball ``B_H(p, radius)``
    certifiably stays inside the region (so every relevant centre exists)."""
    rng = np.random.default_rng([seed, 7003])
    n = lattice.n
    out, have = [], 0
    for _ in range(100):  # gives up (possibly with no probes) if the region is too thin
        if window := lattice.window:
            x = _unit_ball(rng, 4 * size, 2 * n) * window.radius
            W = window.center + x[:, :n] + 1j * x[:, n:]
        else:
            x = _unit_ball(rng, 4 * size, 2 * n) * lattice.max_modulus
            W = x[:, :n] + 1j * x[:, n:]
        W = W[lattice.contains(W)]
        W = W[[bool(lattice.contains(w[None, :], _query_radius(w, radius))[0]) for w in W]] if len(W) else W
        out.append(W)
        have += W.shape[0]
        if have >= size:
            break
    return np.concatenate(out)[:size]


def lattice_counts(lattice: Lattice, probes, radius: float) -> np.ndarray:
    """Number of centres ``a_k`` with ``probe`` certified inside ``B_H(a_k, radius)``.

    Inside is certified by an explicit path, so only upper bounds are needed.
    """
    tree = cKDTree(_realify(lattice.centers))
    counts = np.zeros(len(probes), dtype=int)
    for i, p in enumerate(probes):
        near = tree.query_ball_point(_realify(p[None, :])[0], _query_radius(p, radius))
        if near:
            counts[i] = int(np.sum(_upper_batch(p, lattice.centers[sorted(near)]) < radius))
    return counts


@dataclass(frozen=True)
class LatticeReport:
    centers: int
    pairs_checked: int
    max_quarter_count: int
    uncovered: int
    probes: int
    overlap: int

    @property
    def ok(self) -> bool:
        return self.max_quarter_count <= 1 and self.uncovered == 0


def verify_lattice(lattice: Lattice, probes: int = 2000, seed: int = 0, slack: float = COVER_SLACK) -> LatticeReport:
    """Check separation, disjoint quarter balls, covering and bounded overlap.

    Raises :class:`SeparationUncertain` if some pair of centres cannot be
    certified ``r``-separated. Probes are drawn at Euclidean distance ``4r``
    inside the lattice region so that every ball that could contain them
    is represented.
    """
    r = lattice.radius
    C = lattice.centers
    tree = cKDTree(_realify(C))
    disp = np.array([_comparison(c).displacement(r) for c in C])
    pairs = 0
    for i, c in enumerate(C):
        near = sorted(j for j in tree.query_ball_point(_realify(c[None, :])[0], _query_radius(c, r)) if j != i)
        if near:
            pairs += len(near)
            if not np.all(_separated_from(c, C[near], disp[near], r, disp[i])):
                raise SeparationUncertain(f"centre {i} has a neighbour not certified at distance >= {r}")
    P = probe_cloud(lattice, probes, seed, 4 * r)
    quarter = lattice_counts(lattice, P, r / 4)
    cover = lattice_counts(lattice, P, r * (1.0 + slack))
    overlap = lattice_counts(lattice, P, 4 * r)
    return LatticeReport(len(C), pairs // 2, int(quarter.max()), int(np.sum(cover == 0)), len(P), int(overlap.max()))


# ---------------------------------------------------------------------------


def lipschitz_ratio(z, w) -> np.ndarray:
    """``||z|^2 - |w|^2| / |z - w|`` for paired batches."""
    z, w = np.atleast_2d(z), np.atleast_2d(w)
    return np.abs(defect(w) - defect(z)) / np.linalg.norm(z - w, axis=1)


def lipschitz_norm_probe(samples: int, seed: int, n: int = 1) -> float:
    """Sampled supremum of the Lipschitz ratio of ``1 - |z|^2``.

    Half of the pairs are uniform in the ball; the other half sit on random
    rays at ``(1 - e) v`` and ``(1 - 2e) v`` with ``e`` log-uniform in
    ``[1e-6, 1e-1]``.
    """
    rng = np.random.default_rng([seed, 7004])
    half = samples // 2
    x = _unit_ball(rng, 2 * half, 2 * n)
    Z = x[:, :n] + 1j * x[:, n:]
    uniform = lipschitz_ratio(Z[:half], Z[half:])
    g = rng.standard_normal((samples - half, 2 * n))
    v = g[:, :n] + 1j * g[:, n:]
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    e = 10.0 ** rng.uniform(-6, -1, samples - half)[:, None]
    ray = lipschitz_ratio((1 - e) * v, (1 - 2 * e) * v)
    return float(np.max(np.concatenate([uniform, ray])))


def automorphism(z, W) -> np.ndarray:
    """``phi_z(w) = (z - P_z w - sqrt(1-|z|^2) Q_z w) / (1 - <w, z>)`` on a batch.

    ``phi_z`` swaps ``0`` and ``z`` and is an involution; ``phi_0(w) = -w``.
    """
    z = np.asarray(z, dtype=complex)
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    r2 = float(np.vdot(z, z).real)
    if r2 == 0.0:
        return -W
    wz = W @ np.conj(z)
    Pw = (wz / r2)[:, None] * z[None, :]
    Qw = W - Pw
    u = 1.0 - r2
    return (z[None, :] - Pw - math.sqrt(u) * Qw) / (1.0 - wz)[:, None]
