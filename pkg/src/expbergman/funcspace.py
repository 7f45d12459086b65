"""Holomorphic polynomials, ball automorphisms and the test functions
``Phi_{p,z}(w) = exp((2/p) / (1 - <w,z>) - (1/p) psi(z))``.

Test-function arithmetic happens in log space: ``|Phi_{p,z}|^p`` reaches
``exp(psi(z))`` at ``w = z`` and overflows for ``|z|`` close to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Number

import numpy as np

from . import geometry as geo
from .errors import DegreeOverflow, OverflowGuard
from .quadrature import IntegralResult, IntegrationConfig, Method, integrate_ball, log_weight, mobius_points

Index = tuple[int, ...]


def _clean_terms(terms, n):
    out = {}
    for alpha, c in terms.items():
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != n or min(alpha) < 0:
            raise ValueError(f"bad multi-index {alpha} for n={n}")
        if c != 0:
            out[alpha] = out.get(alpha, 0) + c
    return {a: c for a, c in out.items() if c != 0}


@dataclass(frozen=True)
class MonomialFunction:
    """A polynomial ``sum_alpha c_alpha z^alpha`` on C^n.

    Coefficients may be any numbers (complex, ``Fraction``, ...), which keeps
    the coefficient algebra exact when integers or fractions are used.
    """

    terms: dict
    n: int
    max_degree: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", _clean_terms(self.terms, self.n))
        if self.max_degree is not None and self.degree > self.max_degree:
            raise DegreeOverflow(f"degree {self.degree} exceeds max_degree {self.max_degree}")

    # construction ---------------------------------------------------------
    @classmethod
    def constant(cls, c, n: int) -> "MonomialFunction":
        return cls({(0,) * n: c}, n)

    @classmethod
    def monomial(cls, alpha, c=1) -> "MonomialFunction":
        alpha = tuple(alpha)
        return cls({alpha: c}, len(alpha))

    @classmethod
    def coordinate(cls, j: int, n: int, power: int = 1) -> "MonomialFunction":
        alpha = [0] * n
        alpha[j] = power
        return cls({tuple(alpha): 1}, n)

    # structure ------------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, alpha):
        return self.terms.get(tuple(alpha), 0)

    def __eq__(self, other):
        if not isinstance(other, MonomialFunction):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    # algebra ---------------------------------------------------------------
    def _check(self, other):
        if other.n != self.n:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        if isinstance(other, Number):
            other = MonomialFunction.constant(other, self.n)
        self._check(other)
        t = dict(self.terms)
        for a, c in other.terms.items():
            t[a] = t.get(a, 0) + c
        return MonomialFunction(t, self.n)

    __radd__ = __add__

    def __neg__(self):
        return MonomialFunction({a: -c for a, c in self.terms.items()}, self.n)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Number):
            return MonomialFunction({a: c * other for a, c in self.terms.items()}, self.n)
        self._check(other)
        t = {}
        for a, c in self.terms.items():
            for b, d in other.terms.items():
                k = tuple(x + y for x, y in zip(a, b))
                t[k] = t.get(k, 0) + c * d
        return MonomialFunction(t, self.n)

    __rmul__ = __mul__

    # evaluation ------------------------------------------------------------
    def _arrays(self):
        alphas = np.array(list(self.terms), dtype=int).reshape(-1, self.n)
        coefs = np.array([complex(c) for c in self.terms.values()], dtype=complex)
        return alphas, coefs

    def __call__(self, W):
        W = np.asarray(W, dtype=complex)
        single = W.ndim == 1
        W = np.atleast_2d(W)
        if not self.terms:
            out = np.zeros(W.shape[0], dtype=complex)
        else:
            alphas, coefs = self._arrays()
            powers = np.prod(W[:, None, :] ** alphas[None, :, :], axis=2)
            out = powers @ coefs
        return out[0] if single else out

    def log_abs(self, W):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self(W)))


def eval_monomial(f: MonomialFunction, w) -> complex:
    return complex(f(np.asarray(w, dtype=complex)))


def radial_derivative(f: MonomialFunction) -> MonomialFunction:
    """``R f = sum_j z_j df/dz_j``: each term is multiplied by its degree."""
    return MonomialFunction({a: c * sum(a) for a, c in f.terms.items()}, f.n)


def random_polynomial(n: int, degree: int, rng, terms: int = 4) -> MonomialFunction:
    """A polynomial with ``terms`` random monomials of degree ``<= degree`` and
    standard complex Gaussian coefficients; always includes one top-degree term."""
    terms = min(terms, math.comb(degree + n, n))
    t = {}
    top = [0] * n
    top[int(rng.integers(n))] = degree
    t[tuple(top)] = complex(rng.standard_normal(), rng.standard_normal())
    while len(t) < terms:
        d = int(rng.integers(0, degree + 1))
        cuts = np.sort(rng.integers(0, d + 1, size=n - 1))
        alpha = tuple(int(x) for x in np.diff(np.concatenate([[0], cuts, [d]])))
        t.setdefault(alpha, complex(rng.standard_normal(), rng.standard_normal()))
    return MonomialFunction(t, n)


def polynomial_suite(n: int, count: int = 50, max_degree: int = 6, seed: int = 0):
    rng = np.random.default_rng([seed, 303, n])
    return [random_polynomial(n, int(rng.integers(0, max_degree + 1)), rng, terms=int(rng.integers(1, 5))) for _ in range(count)]


# ---------------------------------------------------------------------------
# automorphisms


def mobius(z, w) -> np.ndarray:
    """``phi_z(w)``; ``w`` may be a point or a batch of points."""
    z = geo.as_point(z)
    single = np.ndim(w) == 1
    out = geo.automorphism(z, np.atleast_2d(np.asarray(w, dtype=complex)))
    return out[0] if single else out


def mobius_identity_residual(z, W) -> np.ndarray:
    """Residual of ``1-|phi_z(w)|^2 = (1-|z|^2)(1-|w|^2)/|1-<w,z>|^2``."""
    z = np.asarray(z, dtype=complex)
    W = np.atleast_2d(W)
    lhs = geo.defect(geo.automorphism(z, W))
    rhs = geo.defect(z) * geo.defect(W) / np.abs(1.0 - W @ np.conj(z)) ** 2
    return np.abs(lhs - rhs)


# ---------------------------------------------------------------------------
# test functions


def key_exponent(z, W) -> np.ndarray:
    """``2 Re(1/(1-<w,z>)) - psi(z) - psi(w)``, the log of ``|Phi_{p,z}(w)|^p e^{-psi(w)}``."""
    z = np.asarray(z, dtype=complex)
    W = np.atleast_2d(W)
    return 2.0 * np.real(1.0 / (1.0 - W @ np.conj(z))) - 1.0 / geo.defect(z) - 1.0 / geo.defect(W)


@dataclass(frozen=True)
class TestFunction:
    """``Phi_{p,z}``; ``normalized=True`` divides by ``||Phi_{p,z}||_{p,psi}``."""

    __test__ = False  # not a pytest class

    p: float
    center: np.ndarray
    log_norm: float = 0.0  # log ||Phi||_{p,psi}, subtracted when normalised

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError("p must be >= 1")
        object.__setattr__(self, "center", geo.as_point(self.center))

    @property
    def n(self) -> int:
        return self.center.size

    def log_value(self, W) -> np.ndarray:
        """Complex logarithm of ``Phi(w)`` (minus ``log_norm``)."""
        W = np.atleast_2d(np.asarray(W, dtype=complex))
        z = self.center
        return (2.0 / self.p) / (1.0 - W @ np.conj(z)) - geo.psi(z) / self.p - self.log_norm

    def log_abs(self, W) -> np.ndarray:
        return np.real(self.log_value(W))

    def __call__(self, W):
        return eval_test_function(self, W)


def eval_test_function(t: TestFunction, w):
    single = np.ndim(w) == 1
    e = t.log_value(w)
    if np.any(np.real(e) > 700):
        raise OverflowGuard("test-function exponent exceeds 700")
    out = np.exp(e)
    return complex(out[0]) if single else out


def test_norm(t: TestFunction, cfg: IntegrationConfig | None = None) -> IntegralResult:
    """``||Phi_{p,z}||_{p,psi}^p`` by Mobius importance sampling around the centre.

    ``|Phi_{p,z}|^p e^{-psi}`` does not depend on ``p``; any ``log_norm`` of
    ``t`` is accounted for (a normalised function gives ~1).
    """
    cfg = cfg or IntegrationConfig()
    z = t.center
    shift = t.p * t.log_norm

    def integrand(W):
        return np.exp(key_exponent(z, W) - shift)

    if cfg.method is Method.RADIAL_PRODUCT and not np.any(z):
        from .quadrature import radial_integral, sphere_area

        n = t.n
        val = math.e * sphere_area(n) * radial_integral(2 * n - 1) * math.exp(-shift)
        return IntegralResult(val, 0.0, Method.RADIAL_PRODUCT.value)
    mcfg = IntegrationConfig(cfg.samples, cfg.seed, cfg.shells, cfg.max_abs_coord, Method.MOBIUS)
    return integrate_ball(integrand, t.n, mcfg, center=z)


test_norm.__test__ = False


def norm_ratio(z, cfg: IntegrationConfig | None = None, p: float = 2.0) -> tuple[float, float]:
    """``||Phi_{p,z}||^p / (1-|z|^2)^{2n+1}`` with its standard error."""
    z = geo.as_point(z)
    res = test_norm(TestFunction(p, z), cfg)
    scale = float(geo.defect(z)) ** (2 * z.size + 1)
    return res.value / scale, res.stderr / scale


def normalized_test_function(p: float, z, cfg: IntegrationConfig | None = None) -> TestFunction:
    """``Phi~_{p,z} = Phi_{p,z} / ||Phi_{p,z}||_{p,psi}``."""
    t = TestFunction(p, z)
    res = test_norm(t, cfg)
    return TestFunction(p, z, math.log(res.value) / p)


def key_inequality_constant(z, r: float, samples: int = 4000, seed: int = 0) -> float:
    """``sup |2 Re(1/(1-<w,z>)) - psi(z) - psi(w)|`` over samples of ``D_psi(z, r)``.

    The centre itself is always included (where the expression is 0).
    """
    z = geo.as_point(z)
    rng = np.random.default_rng([seed, 404])
    W = geo.sample_D(z, r, samples, rng)
    W = np.vstack([z[None, :], W])
    return float(np.max(np.abs(key_exponent(z, W))))


def submeanvalue_constant(
    f: MonomialFunction,
    p: float,
    s: float,
    r: float,
    z,
    cfg: IntegrationConfig | None = None,
) -> float:
    """``|f(z)|^p e^{-s psi(z)} / ((1-|z|^2)^{-(2n+1)} int_{B_H(z,r)} |f|^p e^{-s psi} dv)``.

    The ball integral uses uniform samples of a certified bounding ellipsoid,
    classified against ``B_H(z, r)``; undecided samples count 1/2.
    """
    cfg = cfg or IntegrationConfig()
    z = geo.as_point(z)
    n = z.size
    fz = abs(complex(f(z)))
    if fz == 0.0:
        return 0.0
    bs = geo.sample_ball(z, r, cfg.samples, cfg.seed, refine=0)
    keep = bs.hits > 0
    W = bs.points[keep]
    # log of |f(w)|^p e^{-s psi(w)} relative to the value at z
    with np.errstate(divide="ignore"):
        rel = p * (np.log(np.abs(f(W))) - math.log(fz)) - s * (geo.psi(W) - geo.psi(z))
    integral_rel = bs.bounding_volume * np.sum(bs.hits[keep] * np.exp(rel)) / bs.hits.size
    u = float(geo.defect(z))
    return float(u ** (2 * n + 1) / integral_rel)
