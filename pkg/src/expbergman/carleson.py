"""Measures on the ball, the averaged transform ``mu_hat_p`` and Carleson tests.

``mu_hat_p(z) = ||Phi_{p,z}||^{-p} int |Phi_{p,z}|^p e^{-psi} dmu``.
Since ``|Phi_{p,z}|^p e^{-psi(w)} = exp(2 Re(1/(1-<w,z>)) - psi(z) - psi(w))``
does not involve ``p``, the transform is the same for every ``p``; the
parameter is still validated and carried through for reporting.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import geometry as geo
from .funcspace import TestFunction, key_exponent, test_norm
from .quadrature import IntegralResult, IntegrationConfig, log_weight, mobius_points, stratified_points, weighted_norm

# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class LebesgueVolume:
    name: str = "lebesgue"

    def density(self, W) -> np.ndarray:
        return np.ones(len(W))


@dataclass(frozen=True)
class Density:
    """``d mu = d(w) dv(w)`` for a nonnegative vectorised density ``d``.

    ``radial_power = a`` marks the density ``(1-|w|^2)^a`` so that radial
    quadrature can be used where available.
    """

    fn: Callable
    name: str = "density"
    radial_power: float | None = None

    def density(self, W) -> np.ndarray:
        return np.asarray(self.fn(W), dtype=float)


@dataclass(frozen=True)
class Atomic:
    """``mu = sum_k m_k delta_{a_k}`` with positive masses."""

    points: np.ndarray
    masses: np.ndarray
    name: str = "atomic"

    def __post_init__(self):
        pts = geo.as_points(self.points)
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if m.size != pts.shape[0]:
            raise ValueError("one mass per atom is required")
        if np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise ValueError("atomic masses must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    @property
    def n(self) -> int:
        return self.points.shape[1]


MeasureSpec = Union[LebesgueVolume, Density, Atomic]


def power_density(a: float) -> Density:
    """``(1-|w|^2)^a dv``."""
    a = float(a)
    return Density(lambda W: geo.defect(W) ** a, f"power:{a:g}", radial_power=a)


def gaussian_bump(center, width: float, height: float = 1.0) -> Density:
    """``1 + height * exp(-|w - c|^2 / (2 width^2))`` times ``dv``."""
    c = geo.as_point(center)
    if width <= 0:
        raise ValueError("width must be positive")

    def fn(W):
        return 1.0 + height * np.exp(-np.sum(np.abs(W - c) ** 2, axis=1) / (2 * width**2))

    return Density(fn, f"bump:{width:g}:{height:g}")


def atomic_from_json(records) -> Atomic:
    """Atoms from ``[{"point": [re1, im1, re2, im2, ...], "mass": m}, ...]``."""
    if isinstance(records, str):
        records = json.loads(records)
    pts, masses = [], []
    for rec in records:
        flat = np.asarray(rec["point"], dtype=float)
        if flat.size % 2 or flat.size == 0:
            raise ValueError("atom coordinates must come in (re, im) pairs")
        pts.append(flat[0::2] + 1j * flat[1::2])
        masses.append(float(rec["mass"]))
    if not pts:
        raise ValueError("empty atomic measure")
    return Atomic(np.array(pts), np.array(masses))


# ---------------------------------------------------------------------------
# statistics


def _ratio_estimate(num, den):
    """Ratio of means with a delta-method standard error."""
    R = float(np.sum(num) / np.sum(den))
    N = num.size
    resid = num - R * den
    err = math.sqrt(float(np.var(resid, ddof=1)) / N) / abs(float(np.mean(den)))
    return R, err


def measure_of_region(mu: MeasureSpec, region: geo.RegionQuery, cfg: IntegrationConfig | None = None) -> IntegralResult:
    """``mu(B_H(z, r))`` or ``mu(D_psi(z, r))``.

    Atoms are tested one by one (undecided atoms count half their mass and
    widen the error); densities are integrated by uniform sampling of the
    region's certified bounding set.
    """
    cfg = cfg or IntegrationConfig()
    z, r = region.center, region.radius
    if isinstance(mu, Atomic):
        if region.kind == "D":
            inside = geo.in_D(z, mu.points, r)
            return IntegralResult(float(mu.masses[inside].sum()), 0.0, "exact-atomic")
        codes = np.array([geo.in_BH(z, a, r) for a in mu.points])
        val = float(mu.masses[codes == geo.Membership.INSIDE].sum() + 0.5 * mu.masses[codes == geo.Membership.UNKNOWN].sum())
        err = 0.5 * float(mu.masses[codes == geo.Membership.UNKNOWN].sum())
        return IntegralResult(val, err, "exact-atomic")
    if region.kind == "D":
        rng = np.random.default_rng([cfg.seed, 505])
        W = geo.sample_D(z, r, cfg.samples, rng)
        vals = geo.volume_D(z, r) * mu.density(W) * (W.shape[0] / cfg.samples)
        vals = np.concatenate([vals, np.zeros(cfg.samples - W.shape[0])])
        return IntegralResult(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)), "montecarlo-D", cfg.seed, cfg.samples)
    bs = geo.sample_ball(z, r, cfg.samples, cfg.seed, refine=0)
    ok = geo.defect(bs.points) > 4 * geo.EPS_BOUNDARY
    d = np.zeros(bs.hits.size)
    d[ok] = mu.density(bs.points[ok])
    vals = bs.bounding_volume * bs.hits * d
    stderr = math.hypot(float(vals.std(ddof=1) / math.sqrt(vals.size)), bs.bounding_volume * bs.unknown_fraction * float(d.max(initial=0)) / math.sqrt(12))
    return IntegralResult(float(vals.mean()), stderr, "montecarlo-ellipsoid", cfg.seed, cfg.samples)


def ball_ratio(mu: MeasureSpec, z, r: float, cfg: IntegrationConfig | None = None) -> IntegralResult:
    """``mu(B_H(z, r)) / v(B_H(z, r))``; densities use one common sample for both."""
    cfg = cfg or IntegrationConfig()
    z = geo.as_point(z)
    if isinstance(mu, LebesgueVolume):
        return IntegralResult(1.0, 0.0, "exact")
    if isinstance(mu, Atomic):
        m = measure_of_region(mu, geo.RegionQuery(z, r), cfg)
        if m.value == 0.0 and m.stderr == 0.0:
            return IntegralResult(0.0, 0.0, "exact-atomic")
        v = geo.ball_volume(z, r, cfg.samples, cfg.seed, refine=0)
        val = m.value / v.estimate
        return IntegralResult(val, val * math.hypot(m.stderr / max(m.value, 1e-300), v.stderr / v.estimate), "atomic/montecarlo", cfg.seed, cfg.samples)
    bs = geo.sample_ball(z, r, cfg.samples, cfg.seed, refine=0)
    ok = geo.defect(bs.points) > 4 * geo.EPS_BOUNDARY
    d = np.zeros(bs.hits.size)
    d[ok] = mu.density(bs.points[ok])
    R, err = _ratio_estimate(bs.hits * d, bs.hits)
    return IntegralResult(R, err, "montecarlo-ellipsoid-ratio", cfg.seed, cfg.samples)


def mu_hat(mu: MeasureSpec, p: float, z, cfg: IntegrationConfig | None = None) -> IntegralResult:
    """``mu_hat_p(z)``; numerator and denominator share importance samples, so
    Lebesgue measure gives exactly 1. Atomic numerators are exact sums."""
    if not p >= 1:
        raise ValueError("p must be >= 1")
    cfg = cfg or IntegrationConfig()
    z = geo.as_point(z)
    if isinstance(mu, Atomic):
        num = float(np.sum(mu.masses * np.exp(key_exponent(z, mu.points))))
        den = test_norm(TestFunction(p, z), cfg)
        val = num / den.value
        return IntegralResult(val, val * den.stderr / den.value, "atomic/mobius", cfg.seed, cfg.samples)
    W, wts = mobius_points(z, z.size, cfg)
    ok = geo.defect(W) > 4 * geo.EPS_BOUNDARY
    base = np.zeros(W.shape[0])
    base[ok] = np.exp(key_exponent(z, W[ok])) * wts[ok]
    d = np.zeros(W.shape[0])
    d[ok] = mu.density(W[ok])
    R, err = _ratio_estimate(base * d, base)
    return IntegralResult(R, err, "mobius-ratio", cfg.seed, cfg.samples)


def embedding_ratio(mu: MeasureSpec, f, p: float, cfg: IntegrationConfig | None = None) -> float:
    """``int |f|^p e^{-psi} dmu / int |f|^p e^{-psi} dv``."""
    cfg = cfg or IntegrationConfig()
    if getattr(f, "is_zero", lambda: False)():
        raise ValueError("f must be nonzero")
    if isinstance(mu, LebesgueVolume):
        return 1.0
    if isinstance(mu, Atomic):
        num = float(np.sum(mu.masses * np.abs(f(mu.points)) ** p * np.exp(log_weight(mu.points))))
        return num / float(weighted_norm(f, p, cfg).value)
    W, _ = stratified_points(f.n, cfg, stream=1)
    with np.errstate(divide="ignore"):
        g = np.exp(p * np.log(np.abs(f(W))) + log_weight(W))
    return float(np.sum(g * mu.density(W)) / np.sum(g))


# ---------------------------------------------------------------------------
# verdicts


class Verdict(str, enum.Enum):
    CARLESON = "Carleson"
    NOT_CARLESON = "NotCarleson"
    VANISHING = "Vanishing"
    NOT_VANISHING = "NotVanishing"
    INCONCLUSIVE = "Inconclusive"


DEFAULT_GRID = (0.0, 0.5, 0.8, 0.9, 0.95, 0.99)
CAP_FACTOR = 50.0
VANISH_FACTOR = 0.1
TAIL_TOLERANCE = 0.25
CHAIN_CONSTANT = 5.0


def tail_exponent(radii, values, points: int = 3) -> float:
    """Least-squares slope of ``log value`` against ``log(1-|z|^2)`` over the tail.

    Values behaving like ``(1-|z|^2)^g`` near the sphere give ``g``:
    positive means decay, negative growth.
    """
    radii = np.asarray(radii, dtype=float)[-points:]
    vals = np.asarray(values, dtype=float)[-points:]
    if np.any(vals <= 0):
        return math.inf if np.all(vals[1:] <= 0) else math.nan
    x = np.log(1.0 - radii**2)
    return float(np.polyfit(x, np.log(vals), 1)[0])


def _run_length(values, increasing: bool) -> int:
    """Length of the monotone run ending at the last grid point."""
    v = np.asarray(values, dtype=float)
    run = 1
    for k in range(len(v) - 1, 0, -1):
        if (v[k] > v[k - 1]) if increasing else (v[k] < v[k - 1]):
            run += 1
        else:
            break
    return run


def classify_trace(radii, values, cap_factor=CAP_FACTOR, vanish_factor=VANISH_FACTOR, tol=TAIL_TOLERANCE):
    """Carleson and vanishing verdicts from a boundary trace.

    * NotCarleson: the last three or more values increase and either exceed
      ``cap_factor`` times the first value or grow like a negative power of
      ``1-|z|^2`` (tail exponent <= -tol).
    * Carleson: every value is below the cap and the tail exponent is > -tol.
    * Vanishing (given Carleson): the tail decreases and either decays like
      a positive power (exponent >= tol) or ends below ``vanish_factor``
      times the first value. NotVanishing: Carleson with a flat tail.
    """
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return Verdict.CARLESON, Verdict.VANISHING, 0.0
    first = v[0] if v[0] > 0 else float(np.max(v))
    cap = cap_factor * first
    g = tail_exponent(radii, v)
    if _run_length(v, True) >= 3 and (np.max(v) > cap or g <= -tol):
        return Verdict.NOT_CARLESON, Verdict.NOT_VANISHING, g
    if not (np.all(v <= cap) and (g > -tol or math.isinf(g))):
        return Verdict.INCONCLUSIVE, Verdict.INCONCLUSIVE, g
    decaying = _run_length(v, False) >= 2 or v[-1] == 0
    if decaying and (g >= tol or v[-1] < vanish_factor * first):
        return Verdict.CARLESON, Verdict.VANISHING, g
    if abs(g) < tol:
        return Verdict.CARLESON, Verdict.NOT_VANISHING, g
    return Verdict.CARLESON, Verdict.INCONCLUSIVE, g


@dataclass
class CarlesonReport:
    sup_mu_hat: float
    sup_ball_ratio: float
    lattice_sup_ratio: float
    verdict: Verdict
    vanishing_verdict: Verdict
    boundary_trace: list  # (|z|, mu_hat, ball_ratio), maximised over rays
    p: float
    r: float
    tail_exponent: float
    chain_constant: float  # max ball_ratio / mu_hat over all computed points
    measure: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.vanishing_verdict is Verdict.VANISHING and self.verdict is not Verdict.CARLESON:
            raise ValueError("a vanishing verdict requires a Carleson verdict")


def ray_directions(n: int, count: int = 5, seed: int = 0) -> np.ndarray:
    """``e_1`` followed by ``count - 1`` seeded random unit vectors."""
    rng = np.random.default_rng([seed, 606, n])
    dirs = [np.eye(n, dtype=complex)[0]]
    for _ in range(count - 1):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def carleson_check(
    mu: MeasureSpec,
    p: float,
    r: float,
    lattice: geo.Lattice | None = None,
    boundary_grid=DEFAULT_GRID,
    cfg: IntegrationConfig | None = None,
    *,
    n: int | None = None,
    rays: int = 5,
    ball_samples: int = 4000,
    lattice_points: int = 32,
) -> CarlesonReport:
    """Boundary traces of ``mu_hat_p`` and ball ratios plus lattice ratios.

    The verdicts are read off the ``mu_hat_p`` trace (see :func:`classify_trace`);
    ball ratios enter the reported chain constant ``max ball_ratio / mu_hat``.
    """
    cfg = cfg or IntegrationConfig()
    if n is None:
        n = mu.n if isinstance(mu, Atomic) else (lattice.n if lattice is not None else 1)
    bcfg = IntegrationConfig(ball_samples, cfg.seed, cfg.shells)
    dirs = ray_directions(n, rays, cfg.seed)
    trace, chain = [], 0.0
    for t in boundary_grid:
        mh, br = 0.0, 0.0
        for e in dirs[: 1 if t == 0 else len(dirs)]:
            z = t * e
            m = mu_hat(mu, p, z, cfg).value
            b = ball_ratio(mu, z, r, bcfg).value
            mh, br = max(mh, m), max(br, b)
            if m > 0:
                chain = max(chain, b / m)
            elif b > 0:
                chain = math.inf
        trace.append((float(t), float(mh), float(br)))
    lat_sup = 0.0
    if lattice is not None and len(lattice.centers):
        idx = np.unique(np.linspace(0, len(lattice.centers) - 1, min(lattice_points, len(lattice.centers))).astype(int))
        for a in lattice.centers[idx]:
            b = ball_ratio(mu, a, lattice.radius, bcfg).value
            m = mu_hat(mu, p, a, cfg).value
            lat_sup = max(lat_sup, b)
            if m > 0:
                chain = max(chain, b / m)
            elif b > 0:
                chain = math.inf
    radii = [t for t, _, _ in trace]
    verdict, vanishing, g = classify_trace(radii, [m for _, m, _ in trace])
    return CarlesonReport(
        sup_mu_hat=max(m for _, m, _ in trace),
        sup_ball_ratio=max(b for _, _, b in trace),
        lattice_sup_ratio=lat_sup,
        verdict=verdict,
        vanishing_verdict=vanishing,
        boundary_trace=trace,
        p=p,
        r=r,
        tail_exponent=g,
        chain_constant=chain,
        measure=getattr(mu, "name", ""),
        seed=cfg.seed,
    )
