"""Cesaro operators, the truncated Bergman kernel and Toeplitz operators on A^2_psi.

The monomials ``z^alpha`` are orthogonal for the radial weight ``e^{-psi}``,
with ``h_alpha = ||z^alpha||^2 = A_alpha I_{2|alpha|+2n-1}``; the truncated
basis ``e_alpha = z^alpha / sqrt(h_alpha)``, ``|alpha| <= N``, carries the
kernel ``K_N`` and the finite sections of Toeplitz operators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from . import geometry as geo
from .carleson import Density, LebesgueVolume, mu_hat
from .errors import DegreeOverflow, NonHermitian
from .funcspace import MonomialFunction, radial_derivative
from .quadrature import (
    IntegralResult,
    IntegrationConfig,
    angular_monomial_constant,
    log_radial_integral,
    log_weight,
    radial_moment,
    stratified_points,
    weighted_norm,
)

DEFAULT_TRUNCATION = {1: 30, 2: 10, 3: 6}

# ---------------------------------------------------------------------------
# Cesaro operators


@dataclass(frozen=True)
class KernelSymbol:
    """A symbol ``g`` with ``R g(z) = (1 - <z, a>)^{-2}``, ``|a| = 1``.

    It gives a bounded, non-compact Cesaro operator; only pointwise
    evaluation of ``R g`` is available.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex).reshape(-1)
        if not math.isclose(float(np.linalg.norm(a)), 1.0, rel_tol=1e-12):
            raise ValueError("the symbol direction must be a unit vector")
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.size

    def radial_derivative_values(self, W) -> np.ndarray:
        return (1.0 - np.atleast_2d(W) @ np.conj(self.a)) ** -2


def cesaro_apply(g: MonomialFunction, f: MonomialFunction, max_degree: int | None = None) -> MonomialFunction:
    """``V_g f(z) = int_0^1 f(tz) Rg(tz) dt/t`` in closed form.

    A term ``a z^alpha`` of ``f`` and ``b z^beta`` of ``g`` (``|beta| >= 1``)
    contribute ``a |beta| b / (|alpha| + |beta|) z^(alpha+beta)``. With integer
    or ``Fraction`` coefficients the result is exact.
    """
    if f.n != g.n:
        raise ValueError("dimension mismatch")
    out = {}
    for beta, b in radial_derivative(g).terms.items():
        for alpha, a in f.terms.items():
            k = tuple(x + y for x, y in zip(alpha, beta))
            deg = sum(k)
            if max_degree is not None and deg > max_degree:
                raise DegreeOverflow(f"degree {deg} exceeds {max_degree}")
            coef = a * b
            coef = coef / deg if not isinstance(coef, int) else _exact_div(coef, deg)
            out[k] = out.get(k, 0) + coef
    return MonomialFunction(out, f.n)


def _exact_div(c: int, d: int):
    from fractions import Fraction

    return Fraction(c, d)


def symbol_values(g, W) -> np.ndarray:
    """``|Rg|`` at the rows of ``W`` for a polynomial or kernel symbol."""
    if isinstance(g, KernelSymbol):
        return np.abs(g.radial_derivative_values(W))
    return np.abs(radial_derivative(g)(np.atleast_2d(W)))


@dataclass(frozen=True)
class SymbolStatistic:
    sup: float
    boundary_trace: list  # (|z|, value along e_1, max over rays)


def cesaro_symbol_statistic(g, boundary_grid=(0.0, 0.5, 0.8, 0.9, 0.95, 0.99), rays: int = 5, seed: int = 0) -> SymbolStatistic:
    """``sup |Rg(z)| (1-|z|^2)^2`` over rays ``e_1`` plus seeded random directions."""
    from .carleson import ray_directions

    dirs = ray_directions(g.n, rays, seed)
    trace, sup = [], 0.0
    for t in boundary_grid:
        Z = t * dirs
        vals = symbol_values(g, Z) * (1.0 - t * t) ** 2
        trace.append((float(t), float(vals[0]), float(vals.max())))
        sup = max(sup, float(vals.max()))
    return SymbolStatistic(sup, trace)


def norm_equivalence_ratio(f: MonomialFunction, p: float, cfg: IntegrationConfig | None = None) -> float:
    """``||f||_p^p / (|f(0)|^p + int |Rf|^p (1-|z|^2)^{2p} e^{-psi} dv)``.

    For ``p = 2`` both sides are exact sums over monomials; otherwise they are
    estimated on one common stratified sample.
    """
    if f.is_zero():
        raise ValueError("f must be nonzero")
    n = f.n
    f0 = abs(complex(f.coefficient((0,) * n)))
    if p == 2:
        num = weighted_norm(f, 2).value
        rest = 0.0
        for alpha, c in f.terms.items():
            d = sum(alpha)
            if d:
                rest += abs(complex(c)) ** 2 * d * d * angular_monomial_constant(alpha) * math.exp(log_radial_integral(2 * d + 2 * n - 1, 4.0))
        return float(num / (f0**2 + rest))
    cfg = cfg or IntegrationConfig()
    W, _ = stratified_points(n, cfg, stream=2)
    lw = log_weight(W)
    V = math.pi**n / math.factorial(n)
    with np.errstate(divide="ignore"):
        num = V * np.mean(np.exp(p * np.log(np.abs(f(W))) + lw))
        Rf = radial_derivative(f)
        den_int = V * np.mean(np.exp(p * np.log(np.abs(Rf(W))) + 2 * p * np.log(geo.defect(W)) + lw))
    return float(num / (f0**p + den_int))


# ---------------------------------------------------------------------------
# truncated basis and kernel


def multi_indices(n: int, max_degree: int):
    """All ``alpha`` with ``|alpha| <= max_degree``, ordered by degree then lexicographically."""
    out = []
    for d in range(max_degree + 1):
        level = [a for a in itertools.product(range(d + 1), repeat=n) if sum(a) == d]
        out.extend(sorted(level, reverse=True))
    return out


@dataclass(frozen=True)
class OrthonormalBasis:
    n: int
    max_degree: int

    @cached_property
    def indices(self) -> list:
        return multi_indices(self.n, self.max_degree)

    @cached_property
    def alphas(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(-1, self.n)

    @cached_property
    def log_norms(self) -> np.ndarray:
        """``log h_alpha``."""
        n = self.n
        return np.array([math.log(angular_monomial_constant(a)) + log_radial_integral(2 * sum(a) + 2 * n - 1) for a in self.indices])

    @property
    def norms(self) -> dict:
        return {a: math.exp(l) for a, l in zip(self.indices, self.log_norms)}

    @property
    def degrees(self) -> np.ndarray:
        return self.alphas.sum(axis=1)

    def __len__(self) -> int:
        return len(self.indices)

    def evaluate(self, W) -> np.ndarray:
        """Matrix ``E[i, k] = e_{alpha_k}(w_i)``."""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        powers = np.prod(W[:, None, :] ** self.alphas[None, :, :], axis=2)
        return powers * np.exp(-0.5 * self.log_norms)[None, :]

    def truncate(self, degree: int) -> "OrthonormalBasis":
        return OrthonormalBasis(self.n, degree)


def default_basis(n: int) -> OrthonormalBasis:
    return OrthonormalBasis(n, DEFAULT_TRUNCATION.get(n, 4))


def bergman_kernel_truncated(basis: OrthonormalBasis, z, w) -> complex:
    """``K_N(z, w) = sum_{|alpha| <= N} z^alpha conj(w^alpha) / h_alpha``."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    Ez = np.prod(z[None, :] ** basis.alphas, axis=1)
    Ew = np.prod(w[None, :] ** basis.alphas, axis=1)
    return complex(np.sum(Ez * np.conj(Ew) * np.exp(-basis.log_norms)))


def log_kernel_diagonal(basis: OrthonormalBasis, z) -> float:
    """``log K_N(z, z)`` computed as a log-sum-exp."""
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    with np.errstate(divide="ignore"):
        logs = basis.alphas @ (2.0 * np.log(absz)) if np.all(absz > 0) else _log_powers(absz, basis.alphas)
    return float(logsumexp(logs - basis.log_norms))


def _log_powers(absz, alphas):
    with np.errstate(divide="ignore"):
        lz = np.log(absz)
    out = np.zeros(alphas.shape[0])
    for j in range(alphas.shape[1]):
        col = alphas[:, j]
        with np.errstate(invalid="ignore"):
            out += np.where(col > 0, 2.0 * col * lz[j], 0.0)
    return out


@dataclass(frozen=True)
class KernelTrace:
    radii: tuple
    schedule: tuple
    values: np.ndarray  # (len(schedule), len(radii))

    def plateau_gap(self, max_radius: float = 0.8) -> float:
        """Largest relative change between the last two truncations for ``|z| <= max_radius``."""
        a, b = self.values[-2], self.values[-1]
        sel = np.asarray(self.radii) <= max_radius + 1e-12
        return float(np.max(np.abs(b[sel] - a[sel]) / b[sel]))

    @property
    def cap(self) -> float:
        return float(self.values.max())


def kernel_diagonal_bound(basis: OrthonormalBasis, radial_grid, N_schedule) -> KernelTrace:
    """``K_N(z,z) (1-|z|^2)^{2n+1} e^{-2 psi(z)}`` along ``z = t e_1`` for each ``N``."""
    n = basis.n
    vals = np.zeros((len(N_schedule), len(radial_grid)))
    for i, N in enumerate(N_schedule):
        if N > basis.max_degree:
            raise DegreeOverflow(f"schedule entry {N} exceeds basis degree {basis.max_degree}")
        b = basis.truncate(N)
        for j, t in enumerate(radial_grid):
            z = np.zeros(n, dtype=complex)
            z[0] = t
            u = 1.0 - t * t
            vals[i, j] = math.exp(log_kernel_diagonal(b, z) + (2 * n + 1) * math.log(u) - 2.0 / u)
    return KernelTrace(tuple(float(t) for t in radial_grid), tuple(N_schedule), vals)


# ---------------------------------------------------------------------------
# Toeplitz operators


@dataclass(frozen=True)
class OperatorMatrix:
    """``entries[beta, alpha] = <T e_alpha, e_beta>`` with entrywise standard errors."""

    entries: np.ndarray
    stderr: np.ndarray
    indices: list
    method: str = ""

    @property
    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T), initial=0.0))

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries))


def _symbol(u):
    if isinstance(u, (int, float)):
        c = float(u)
        return Density(lambda W: np.full(len(W), c), f"const:{c:g}", radial_power=0.0 if c == 1.0 else None), c
    if isinstance(u, LebesgueVolume):
        return Density(lambda W: np.ones(len(W)), "const:1", radial_power=0.0), 1.0
    return u, 1.0


def toeplitz_matrix(basis: OrthonormalBasis, u, cfg: IntegrationConfig | None = None, radial: bool | None = None) -> OperatorMatrix:
    """Finite section of ``T_u`` in the basis ``e_alpha``.

    Radial symbols (``(1-|w|^2)^a`` or constants) give a diagonal matrix from
    one-dimensional quadrature; other symbols are integrated by stratified
    Monte Carlo as ``M = E^H diag(u e^{-psi}) E``. Pass ``radial=False`` to
    force Monte Carlo.
    """
    cfg = cfg or IntegrationConfig()
    sym, scale = _symbol(u)
    power = getattr(sym, "radial_power", None)
    if scale != 1.0:
        power = 0.0
    if radial is None:
        radial = power is not None
    k = len(basis)
    if radial and power is not None:
        n = basis.n
        diag = np.array([
            math.exp(log_radial_integral(2 * d + 2 * n - 1, power) - log_radial_integral(2 * d + 2 * n - 1))
            for d in basis.degrees
        ]) * scale
        return OperatorMatrix(np.diag(diag).astype(complex), np.zeros((k, k)), basis.indices, "RadialProduct")
    if radial:
        raise ValueError("symbol is not marked radial")
    W, _ = stratified_points(basis.n, cfg, stream=3)
    V = math.pi**basis.n / math.factorial(basis.n)
    c = sym.density(W) * scale * np.exp(log_weight(W)) * V
    E = basis.evaluate(W)
    N = W.shape[0]
    M = (E.conj().T * c[None, :]) @ E / N
    # entrywise variance of conj(e_beta) e_alpha c
    second = ((np.abs(E.conj().T) ** 2) * (c**2)[None, :]) @ (np.abs(E) ** 2) / N
    err = np.sqrt(np.maximum(second - np.abs(M) ** 2, 0.0) / N)
    return OperatorMatrix(M, err, basis.indices, "MonteCarlo")


def u_hat(u, z, cfg: IntegrationConfig | None = None) -> IntegralResult:
    """``u_hat(z) = int |Phi~_{2,z}|^2 e^{-psi} u dv`` (direct integral form)."""
    sym, scale = _symbol(u)
    return mu_hat(sym, 2.0, z, cfg).scaled(scale)


def toeplitz_norm_probe(matrix: OperatorMatrix, iterations: int = 500, tol: float = 1e-12) -> float:
    """Largest-magnitude eigenvalue of a Hermitian finite section (power iteration).

    Raises :class:`NonHermitian` if the symmetry defect exceeds ten times the
    Monte Carlo error of the entries.
    """
    M = matrix.entries
    slack = 10.0 * float(np.max(matrix.stderr, initial=0.0)) + 1e-12 * max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if matrix.hermitian_residual > slack:
        raise NonHermitian(f"symmetry residual {matrix.hermitian_residual:.3g} exceeds {slack:.3g}")
    A = 0.5 * (M + M.conj().T)
    x = np.ones(A.shape[0], dtype=complex) / math.sqrt(A.shape[0])
    lam = 0.0
    for _ in range(iterations):
        y = A @ x
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0
        new = float(np.real(np.vdot(x, y)))
        x = y / ny
        if abs(abs(new) - abs(lam)) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return abs(lam)


def berezin_truncated(basis: OrthonormalBasis, matrix: OperatorMatrix, z) -> float:
    """``<T k_z, k_z> / <k_z, k_z>`` with the truncated kernel ``k_z = K_N(., z)``."""
    x = np.conj(basis.evaluate(np.asarray(z, dtype=complex))[0])
    return float(np.real(np.vdot(x, matrix.entries @ x)) / np.real(np.vdot(x, x)))
