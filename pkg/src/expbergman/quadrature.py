"""Weighted integration over the unit ball.

Three methods are available:

* ``MonteCarlo``: stratified Monte Carlo with equal-volume shells in ``|z|``;
* ``Mobius``: importance sampling concentrated around a centre ``z``, pulled
  back through the automorphism ``phi_z`` (suited to integrands that peak
  near a point close to the sphere, such as test functions);
* ``RadialProduct``: closed-form angular factor times a 1-d adaptive
  radial quadrature, for monomials and radial integrands.

All randomness is seeded; the same configuration gives the same numbers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .errors import NonFiniteSample
from .geometry import EPS_BOUNDARY, automorphism, defect


class Method(str, enum.Enum):
    MONTE_CARLO = "MonteCarlo"
    MOBIUS = "Mobius"
    RADIAL_PRODUCT = "RadialProduct"


@dataclass(frozen=True)
class IntegrationConfig:
    samples: int = 20000
    seed: int = 0
    shells: int = 16
    max_abs_coord: float = 1.0 - EPS_BOUNDARY
    method: Method = Method.MONTE_CARLO

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if self.shells < 1:
            raise ValueError("shells must be positive")
        object.__setattr__(self, "method", Method(self.method))

    @property
    def acceptance_grade(self) -> bool:
        return self.samples >= 1000 and self.shells >= 8

    def with_seed(self, seed: int) -> "IntegrationConfig":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class IntegralResult:
    value: complex | float
    stderr: float
    method: str
    seed: int | None = None
    samples: int = 0

    @property
    def estimate(self):
        return self.value

    def root(self, p: float) -> tuple[float, float]:
        """``value**(1/p)`` with first-order error propagation."""
        v = float(np.real(self.value))
        r = v ** (1.0 / p)
        return r, (r / (p * v) * self.stderr if v > 0 else float("inf"))

    def scaled(self, c: float) -> "IntegralResult":
        return replace(self, value=self.value * c, stderr=self.stderr * abs(c))


def ball_volume_exact(n: int) -> float:
    """Lebesgue volume ``pi^n / n!`` of the unit ball of C^n."""
    return math.pi**n / math.factorial(n)


def log_weight(W) -> np.ndarray:
    """``-psi(w)``, the logarithm of the weight ``e^{-psi}``."""
    return -1.0 / defect(W)


def weight(W) -> np.ndarray:
    return np.exp(log_weight(W))


# ---------------------------------------------------------------------------
# samplers


def _unit_sphere(rng, size, n):
    g = rng.standard_normal((size, 2 * n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, :n] + 1j * g[:, n:]


def stratified_points(n: int, cfg: IntegrationConfig, stream: int = 0):
    """Points in equal-volume shells; returns ``(points, shell_index)``."""
    rng = np.random.default_rng([cfg.seed, 101, stream])
    S = cfg.shells
    per = max(2, cfg.samples // S)
    k = np.repeat(np.arange(S), per)
    rho = ((k + rng.random(k.size)) / S) ** (1.0 / (2 * n))
    rho = np.minimum(rho, cfg.max_abs_coord)
    return rho[:, None] * _unit_sphere(rng, k.size, n), k


def _check_finite(vals):
    if not np.all(np.isfinite(vals)):
        raise NonFiniteSample("integrand returned a non-finite value at an interior sample")


def _mean_err(vals):
    m = vals.mean()
    if np.iscomplexobj(vals):
        var = vals.real.var(ddof=1) + vals.imag.var(ddof=1)
    else:
        var = vals.var(ddof=1)
    return m, math.sqrt(var / vals.size)


def _stratified(f, n, cfg):
    W, k = stratified_points(n, cfg)
    vals = np.asarray(f(W))
    _check_finite(vals)
    S = cfg.shells
    vals = vals.reshape(S, -1)
    means = vals.mean(axis=1)
    if np.iscomplexobj(vals):
        var = vals.real.var(axis=1, ddof=1) + vals.imag.var(axis=1, ddof=1)
    else:
        var = vals.var(axis=1, ddof=1)
    V = ball_volume_exact(n)
    value = V * means.mean()
    stderr = V / S * math.sqrt(float(np.sum(var / vals.shape[1])))
    value = complex(value) if np.iscomplexobj(value) else float(value)
    return IntegralResult(value, stderr, Method.MONTE_CARLO.value, cfg.seed, W.shape[0])


# mixture weights: Gaussian in xi, uniform in xi, uniform in w
MIX = (0.6, 0.1, 0.3)


def _mobius_scale(z, n):
    # real-coordinate standard deviation of the Gaussian component
    return math.sqrt(max(float(defect(z)), 1e-6) / 4.0)


def mobius_points(z, n: int, cfg: IntegrationConfig, stream: int = 0):
    """Importance samples ``w`` around ``z`` and weights ``1/q(w)``.

    ``q`` is a defensive mixture: ``w = phi_z(xi)`` with ``xi`` from a
    truncated Gaussian at 0 (scale set by ``1-|z|^2``) or uniform on the
    ball, plus ``w`` uniform on the ball. The uniform-in-``w`` part keeps the
    weights bounded by ``V/0.3`` so integrands with mass away from ``z``
    are still estimated with honest errors. ``int F dv ~ mean(F(w) / q(w))``.
    """
    z = np.asarray(z, dtype=complex)
    rng = np.random.default_rng([cfg.seed, 202, stream])
    N = cfg.samples
    s = _mobius_scale(z, n)
    p_in = float(stats.chi2.cdf(1.0 / s**2, 2 * n))
    n_gauss = int(round(MIX[0] * N))
    n_xi = int(round(MIX[1] * N))
    parts, have = [], 0
    while have < n_gauss:
        g = rng.standard_normal((max(256, int(1.2 * (n_gauss - have) / p_in)), 2 * n)) * s
        g = g[np.sum(g * g, axis=1) < 1.0]
        parts.append(g)
        have += g.shape[0]
    g = np.concatenate(parts)[:n_gauss]
    xi = np.concatenate([g[:, :n] + 1j * g[:, n:], _uniform_ball(rng, n_xi, n)])
    W = np.concatenate([automorphism(z, xi), _uniform_ball(rng, N - n_gauss - n_xi, n)])
    # density of the mixture at every sample (phi_z is an involution)
    xi_all = automorphism(z, W)
    r2 = np.sum(np.abs(xi_all) ** 2, axis=1)
    V = ball_volume_exact(n)
    gauss_pdf = np.where(r2 < 1.0, np.exp(-r2 / (2 * s**2)) / (2 * math.pi * s**2) ** n / p_in, 0.0)
    u = float(defect(z))
    J = (u / np.abs(1.0 - xi_all @ np.conj(z)) ** 2) ** (n + 1)
    q = (MIX[0] * gauss_pdf + MIX[1] / V) / J + MIX[2] / V
    return W, 1.0 / q


def _uniform_ball(rng, size, n):
    return rng.random((size, 1)) ** (1.0 / (2 * n)) * _unit_sphere(rng, size, n)


def _mobius(f, n, cfg, center):
    W, wts = mobius_points(center, n, cfg)
    ok = defect(W) > EPS_BOUNDARY
    vals = np.zeros(W.shape[0], dtype=complex)
    fv = np.asarray(f(W[ok]))
    _check_finite(fv)
    vals[ok] = fv
    if not np.iscomplexobj(fv):
        vals = vals.real
    m, e = _mean_err(vals * wts)
    m = complex(m) if np.iscomplexobj(m) else float(m)
    return IntegralResult(m, e, Method.MOBIUS.value, cfg.seed, W.shape[0])


def integrate_ball(f: Callable, n: int, cfg: IntegrationConfig | None = None, center=None) -> IntegralResult:
    """``int_{B_n} f dv`` for a vectorised integrand ``f((N, n) array) -> (N,)``.

    With ``method=RadialProduct`` the integrand must be radial: it is
    evaluated on ``(r, 0, ..., 0)`` and integrated against the sphere area.
    With ``method=Mobius`` a centre point is required.
    """
    cfg = cfg or IntegrationConfig()
    if cfg.method is Method.RADIAL_PRODUCT:
        return _radial(f, n)
    if cfg.method is Method.MOBIUS:
        if center is None:
            raise ValueError("Mobius importance sampling needs a centre")
        return _mobius(f, n, cfg, center)
    return _stratified(f, n, cfg)


def sphere_area(n: int) -> float:
    """Area ``2 pi^n / (n-1)!`` of the unit sphere of C^n."""
    return 2.0 * math.pi**n / math.factorial(n - 1)


def _radial(f, n):
    def g(r):
        w = np.zeros((1, n), dtype=complex)
        w[0, 0] = r
        return float(np.real(f(w))[0]) * r ** (2 * n - 1)

    val, err = integrate.quad(g, 0.0, 1.0 - EPS_BOUNDARY, epsabs=0.0, epsrel=1e-10, limit=200)
    return IntegralResult(sphere_area(n) * val, 0.0, Method.RADIAL_PRODUCT.value)


# ---------------------------------------------------------------------------
# closed forms


@lru_cache(maxsize=None)
def log_radial_integral(k: float, s: float = 0.0) -> float:
    """``log int_0^1 r^k (1-r^2)^s exp(-1/(1-r^2)) dr`` for real ``k >= 0``.

    With ``t = 1 - r^2`` the integral is
    ``1/2 int_0^1 (1-t)^((k-1)/2) t^s e^{-1/t} dt``; the integrand is
    rescaled by its peak before adaptive quadrature.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    a = 0.5 * (k - 1.0)

    def logf(t):
        return a * math.log1p(-t) + s * math.log(t) - 1.0 / t

    if a < 0:
        # integrable singularity (1-t)^a at t = 1: use an algebraic weight
        t_top = min(1.0, -1.0 / s) if s < -1.0 else 1.0
        top = s * math.log(t_top) - 1.0 / t_top
        val, _ = integrate.quad(
            lambda t: math.exp(s * math.log(t) - 1.0 / t - top) if t > 0.0 else 0.0,
            0.0,
            1.0,
            weight="alg",
            wvar=(0.0, a),
            epsabs=0.0,
            epsrel=1e-12,
            limit=400,
        )
        return top + math.log(0.5 * val)

    # stationary point of logf: -a/(1-t) + s/t + 1/t^2 = 0, i.e.
    # (a + s) t^2 + (1 - s) t - 1 = 0 (for a + s > 0)
    c2, c1 = a + s, 1.0 - s
    if c2 > 0:
        t_peak = (-c1 + math.sqrt(c1 * c1 + 4.0 * c2)) / (2.0 * c2)
    else:
        t_peak = 1.0
    t_peak = min(max(t_peak, 1e-6), 1.0 - 1e-9)
    peak = logf(t_peak)
    val, _ = integrate.quad(
        lambda t: math.exp(logf(t) - peak) if 0.0 < t < 1.0 else 0.0,
        0.0,
        1.0,
        points=[t_peak],
        epsabs=0.0,
        epsrel=1e-12,
        limit=400,
    )
    return peak + math.log(0.5 * val)


def radial_integral(k: float, s: float = 0.0) -> float:
    """``I_k = int_0^1 r^k exp(-1/(1-r^2)) dr`` (times ``(1-r^2)^s`` if given), cached."""
    return math.exp(log_radial_integral(float(k), float(s)))


def radial_moment(k: float, g: Callable[[float], float]) -> float:
    """``int_0^1 r^k g(r) exp(-1/(1-r^2)) dr`` for a bounded radial profile ``g``."""
    base = log_radial_integral(float(k))
    a = 0.5 * (k - 1.0)

    def h(t):
        if not 0.0 < t < 1.0:
            return 0.0
        return math.exp(a * math.log1p(-t) - 1.0 / t - base) * g(math.sqrt(1.0 - t))

    t_peak = min(max((-1.0 + math.sqrt(1.0 + 4.0 * a)) / (2.0 * a), 1e-6), 1 - 1e-9) if a > 0 else 0.5
    val, _ = integrate.quad(h, 0.0, 1.0, points=[t_peak], epsabs=0.0, epsrel=1e-11, limit=400)
    return 0.5 * val * math.exp(base)


def angular_monomial_constant(alpha, p: float = 2.0) -> float:
    """``A`` with ``int |z^alpha|^p g(|z|) dv = A int_0^1 r^{p|alpha|+2n-1} g(r) dr``.

    For ``p = 2`` this is ``2 pi^n alpha! / (n - 1 + |alpha|)!``.
    """
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.size
    logA = math.log(2.0) + n * math.log(math.pi)
    logA += float(np.sum(special.gammaln(p * alpha / 2.0 + 1.0)))
    logA -= float(special.gammaln(n + p * alpha.sum() / 2.0))
    return math.exp(logA)


def monomial_norm_p(alpha, p: float = 2.0) -> float:
    """``int |z^alpha|^p e^{-psi} dv`` in closed form times a radial quadrature."""
    alpha = np.asarray(alpha)
    n = alpha.size
    return angular_monomial_constant(alpha, p) * radial_integral(p * alpha.sum() + 2 * n - 1)


def weighted_norm(f, p: float = 2.0, cfg: IntegrationConfig | None = None, n: int | None = None) -> IntegralResult:
    """``||f||_{p,psi}^p = int |f|^p e^{-psi} dv``; use ``.root(p)`` for the norm.

    Monomial functions (objects with ``terms``) use the radial product rule
    when it is exact: a single term, or any number of terms with ``p = 2``
    (the monomials are orthogonal). Otherwise ``f`` is evaluated by Monte
    Carlo; an object with a ``log_abs`` method is integrated in log space.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    cfg = cfg or IntegrationConfig()
    terms = getattr(f, "terms", None)
    if terms is not None:
        items = [(a, c) for a, c in terms.items() if c != 0]
        if not items:
            return IntegralResult(0.0, 0.0, Method.RADIAL_PRODUCT.value)
        if len(items) == 1 or p == 2:
            total = sum(abs(complex(c)) ** p * monomial_norm_p(a, p) for a, c in items)
            return IntegralResult(float(total), 0.0, Method.RADIAL_PRODUCT.value)
        n = f.n
    if n is None:
        raise ValueError("dimension n is required for a generic integrand")
    log_abs = getattr(f, "log_abs", None)
    if log_abs is not None:
        def integrand(W):
            return np.exp(p * log_abs(W) + log_weight(W))
    else:
        def integrand(W):
            a = np.abs(f(W))
            out = np.zeros(a.shape)
            pos = a > 0
            out[pos] = np.exp(p * np.log(a[pos]) + log_weight(W[pos]))
            return out
    if cfg.method is Method.RADIAL_PRODUCT:
        cfg = replace(cfg, method=Method.MONTE_CARLO)
    return integrate_ball(integrand, n, cfg)
