import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import random_point, ray
from expbergman import geometry as geo
from expbergman.errors import BoundaryError, InsufficientResolution, RadiusWarning


def points(n_max=3, max_modulus=0.99):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, n_max))
        coords = draw(st.lists(st.floats(-1, 1), min_size=2 * n, max_size=2 * n))
        v = np.array(coords[:n]) + 1j * np.array(coords[n:])
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.zeros(n, dtype=complex)
        scale = draw(st.floats(0, max_modulus))
        return v / nv * scale

    return build()


# ---------------------------------------------------------------------------
# points and psi


def test_psi_examples():
    assert geo.psi(np.zeros(2)) == 1.0
    assert geo.psi(np.array([0.5, 0.0])) == pytest.approx(4 / 3, rel=1e-15)
    z = np.array([math.sqrt(0.99)])
    assert geo.psi(z) == pytest.approx(100.0, rel=1e-12)


def test_point_rejects_boundary():
    with pytest.raises(BoundaryError):
        geo.as_point([1.0, 0.0])
    with pytest.raises(BoundaryError):
        geo.as_point([1.0 - 1e-13])
    with pytest.raises(ValueError):
        geo.as_point([np.nan])


# ---------------------------------------------------------------------------
# Hessian closed forms


def finite_difference_hessian(z, h=1e-5):
    """Entry (j, k) = d^2 psi / d conj(z_j) d z_k by central differences."""
    n = z.size
    out = np.zeros((n, n), dtype=complex)

    def f(x):
        return float(geo.psi(x))

    def d2(j, k, a, b):
        # second derivative of f along real directions a (in coordinate j) and b (in k)
        ej = np.zeros(n, dtype=complex)
        ek = np.zeros(n, dtype=complex)
        ej[j] = a
        ek[k] = b
        return (f(z + h * ej + h * ek) - f(z + h * ej - h * ek) - f(z - h * ej + h * ek) + f(z - h * ej - h * ek)) / (4 * h * h)

    for j in range(n):
        for k in range(n):
            # d/d conj(z_j) = (d/dx_j + i d/dy_j)/2 ; d/dz_k = (d/dx_k - i d/dy_k)/2
            xx = d2(j, k, 1, 1)
            yy = d2(j, k, 1j, 1j)
            xy = d2(j, k, 1, 1j)
            yx = d2(j, k, 1j, 1)
            out[j, k] = (xx + yy + 1j * (yx - xy)) / 4
    return out


def test_hessian_examples():
    np.testing.assert_allclose(geo.hessian(np.zeros(3)), np.eye(3), atol=0)
    assert geo.hessian(np.array([0.5]))[0, 0].real == pytest.approx(80 / 27, rel=1e-14)
    assert geo.hessian_inverse(np.array([0.5]))[0, 0].real == pytest.approx(27 / 80, rel=1e-14)
    np.testing.assert_allclose(geo.hessian_inverse(np.zeros(2)), np.eye(2), atol=0)


def test_hessian_matches_finite_differences(rng):
    for _ in range(5):
        z = random_point(rng, 3, 0.8)
        H = geo.hessian(z)
        np.testing.assert_allclose(H, finite_difference_hessian(z), atol=1e-6 * np.abs(H).max() + 1e-6)
        assert np.allclose(H, H.conj().T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(H) > 0)


def test_hessian_det_examples():
    assert geo.hessian_det(np.zeros(2)) == 1.0
    assert geo.hessian_det(np.array([0.5, 0.0]), verify=True) == pytest.approx(1280 / 243, rel=1e-12)
    assert geo.hessian_det(np.array([0.9]), verify=True) == pytest.approx(1.81 / 0.19**3, rel=1e-12)


def test_spectral_examples():
    s = geo.hessian_spectral(np.zeros(3))
    assert (s.radial, s.tangential) == (1.0, 1.0)
    np.testing.assert_array_equal(s.P, np.zeros((3, 3)))
    np.testing.assert_array_equal(s.Q, np.eye(3))
    s = geo.hessian_spectral(np.array([0.5, 0.0]))
    assert s.radial == pytest.approx(80 / 27, rel=1e-14)
    assert s.tangential == pytest.approx(16 / 9, rel=1e-14)
    np.testing.assert_allclose(s.P, np.diag([1, 0]), atol=1e-15)


def test_spectral_eigenvalues_match_dense_solver(rng):
    z = random_point(rng, 3, 0.95)
    s = geo.hessian_spectral(z)
    ev = np.sort(np.linalg.eigvalsh(geo.hessian(z)))
    np.testing.assert_allclose(ev, np.sort([s.radial, s.tangential, s.tangential]), rtol=1e-10)


@pytest.mark.parametrize("z", [[1e-160], [5e-324], [4.7e-157j], [1e-200, 3e-201j]])
def test_spectral_form_at_tiny_points(z):
    z = np.array(z, dtype=complex)
    s = geo.hessian_spectral(z)
    np.testing.assert_allclose(s.reconstruct(), geo.hessian(z), atol=1e-12)
    np.testing.assert_allclose(s.P @ s.P, s.P, atol=1e-12)
    assert np.trace(s.P).real == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(points())
def test_closed_form_identities(z):
    n = z.size
    H = geo.hessian(z)
    assert np.max(np.abs(H @ geo.hessian_inverse(z) - np.eye(n))) < 1e-10
    det = geo.hessian_det(z)
    assert abs(np.linalg.det(H).real - det) <= 1e-8 * det
    s = geo.hessian_spectral(z)
    assert np.max(np.abs(s.reconstruct() - H)) <= 1e-10 * np.abs(H).max()
    np.testing.assert_allclose(s.P + s.Q, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(s.P @ s.P, s.P, atol=1e-12)
    np.testing.assert_allclose(s.Q @ s.Q, s.Q, atol=1e-12)


# ---------------------------------------------------------------------------
# curves and distance


def test_curve_length_examples():
    z = np.array([0.3 + 0.1j, 0.2])
    assert geo.curve_length(np.array([z, z])) == 0.0
    oracle, _ = integrate.quad(lambda t: math.sqrt((1 + t * t) / (1 - t * t) ** 3), 0, 0.5, epsabs=0, epsrel=1e-13)
    assert oracle == pytest.approx(0.603255211461785, rel=1e-13)
    seg = np.array([[0.0], [0.5]], dtype=complex)
    assert geo.curve_length(seg) == pytest.approx(oracle, rel=1e-12)


def test_curve_length_dominates_weighted_euclidean(rng):
    for _ in range(10):
        nodes = np.array([random_point(rng, 2, 0.95) for _ in range(4)])
        assert geo.curve_length(nodes) >= geo.euclidean_weighted_length(nodes) * (1 - 1e-9)


def test_curve_length_refinement_is_stable():
    a, b = np.array([-0.9 + 0.1j]), np.array([0.85j])
    coarse = geo.curve_length(np.array([a, b]))
    fine = geo.curve_length(np.array([a + t * (b - a) for t in np.linspace(0, 1, 9)]))
    assert fine == pytest.approx(coarse, rel=1e-9)


def test_sigma_estimate_examples():
    z = np.array([0.2 + 0.1j, -0.3])
    e = geo.sigma_estimate(z, z)
    assert (e.lower, e.upper, e.status) == (0.0, 0.0, geo.Status.RESOLVED)
    e = geo.sigma_estimate(np.zeros(1), np.array([0.5]))
    assert e.upper <= 0.603255211461785 + 1e-12
    assert e.lower >= 1 / 80
    assert e.lower <= e.upper


def test_sigma_intervals_symmetric_and_sound(rng):
    for _ in range(4):
        z, w = random_point(rng, 2, 0.9), random_point(rng, 2, 0.9)
        a, b = geo.sigma_estimate(z, w, budget=16), geo.sigma_estimate(w, z, budget=16)
        assert 0 <= a.lower <= a.upper
        assert a.overlaps(b)


def test_sigma_lower_below_path_lengths(rng):
    Z = [random_point(rng, 2, 0.97) for _ in range(200)]
    W = [random_point(rng, 2, 0.97) for _ in range(200)]
    for z, w in zip(Z, W):
        lo = geo.sigma_lower(z, w[None])[0]
        assert lo <= geo._upper_batch(z, w[None])[0] * (1 + 1e-9)


def test_upper_bounds_concatenate(rng):
    for _ in range(20):
        z, v, w = (random_point(rng, 2, 0.9) for _ in range(3))
        up = lambda a, b: geo._upper_batch(a, b[None])[0]  # noqa: E731
        joined = geo.curve_length(np.array([z, v, w]))
        assert joined == pytest.approx(geo.curve_length(np.array([z, v])) + geo.curve_length(np.array([v, w])), rel=1e-12)
        # every concatenated path bounds sigma(z, w) from above
        assert geo.sigma_lower(z, w[None])[0] <= up(z, v) + up(v, w) + 1e-12


def test_sigma_lower_local_tightness():
    # for nearby points the certified lower bound approaches the frozen-metric length
    z = np.array([0.6, 0.2j])
    w = z + 1e-4 * np.array([0.3 + 0.1j, 0.2])
    lo = geo.sigma_lower(z, w[None])[0]
    hi = geo._upper_batch(z, w[None])[0]
    assert lo / hi > 0.9


# ---------------------------------------------------------------------------
# regions


def test_in_D_examples():
    z = np.array([0.5, 0.0])
    r = 1 / 80
    assert geo.in_D(z, z, r)
    assert geo.in_D(z, np.array([0.5, r * 0.75 * 0.5]), r)
    assert not geo.in_D(z, np.array([0.5 + 2 * r * 0.75**1.5, 0.0]), r)


def test_in_D_ignores_tangential_clause_for_n1():
    z = np.array([0.4 + 0.3j])
    u = 1 - 0.25
    # purely "tangential" offset along i z is still measured by the radial clause in n = 1
    w = z + 0.9 * (1 / 80) * u**1.5 * 1j * z / abs(z[0])
    assert geo.in_D(z, w, 1 / 80)
    P, Q = geo.projectors(z)
    np.testing.assert_allclose(Q, 0, atol=1e-15)


def test_comp_in_D(rng):
    for _ in range(20):
        z = random_point(rng, 3, 0.995)
        W = geo.sample_D(z, 1 / 8, 200, rng)
        ratio = geo.defect(z) / geo.defect(W)
        assert np.all((ratio >= 0.5) & (ratio <= 2.0))


def test_volume_D_closed_form_matches_mc(rng):
    z = np.array([0.6, 0.3j])
    r = 0.05
    exact = geo.volume_D(z, r)
    # Monte Carlo over a bounding Euclidean box: |w - z| < r u sqrt(1 + u) on D
    u = float(geo.defect(z))
    h = r * u * math.sqrt(1 + u)
    N = 200000
    X = rng.uniform(-h, h, size=(N, 4))
    W = z + X[:, :2] + 1j * X[:, 2:]
    hits = geo.in_D(z, W, r)
    est = (2 * h) ** 4 * hits.mean()
    err = (2 * h) ** 4 * hits.std() / math.sqrt(N)
    assert abs(est - exact) < 3 * err


def test_inclusion_audit_has_no_violations(rng):
    for n in (1, 2, 3):
        for t in (0.0, 0.5, 0.9, 0.99):
            a = geo.inclusion_audit(ray(n, t) + 0.0, 1 / 80, 300, rng)
            assert a.inner_checked > 0 and a.outer_checked > 0
            assert a.violations == 0


def test_in_BH_examples():
    z = np.array([0.7, 0.1j])
    r = 1 / 80
    assert geo.in_BH(z, z, r) is geo.Membership.INSIDE
    rng = np.random.default_rng(3)
    for w in geo.sample_D(z, r / (10 * geo.DELTA_MARGIN), 5, rng):
        assert geo.in_BH(z, w, r) is geo.Membership.INSIDE
    far = z + np.array([0.0, 20 * r * geo.defect(z)])
    assert geo.in_BH(z, far, r) is geo.Membership.OUTSIDE


def test_radius_above_limit_warns():
    with pytest.warns(RadiusWarning):
        geo.sample_ball(np.zeros(1), 0.05, 200, 0, refine=0)
    assert geo.RegionQuery(np.zeros(1), 0.05).flagged
    assert not geo.RegionQuery(np.zeros(1), 1 / 80).flagged


def test_ball_volume_at_origin_is_exact():
    # at z = 0 the bounding ellipsoid is the round ball of radius r and is certified inside
    res = geo.ball_volume(np.zeros(1), 1 / 80, samples=2000, seed=0)
    assert res.value == pytest.approx(math.pi / 6400, rel=1e-12)


def test_ball_volume_scales_with_radius():
    z = np.array([0.3 + 0j])
    a = geo.ball_volume(z, 1 / 80, 20000, 3, refine=0)
    b = geo.ball_volume(z, 1 / 160, 20000, 3, refine=0)
    ratio = a.value / b.value
    err = ratio * math.hypot(a.stderr / a.value, b.stderr / b.value)
    assert abs(ratio - 4.0) < 3 * err + 0.02


def test_ball_volume_frozen_values():
    # reference values produced by this implementation (seeded)
    res = geo.ball_volume(np.array([0.5, 0.0]), 1 / 80, 20000, 0, refine=0)
    u = 0.75
    assert res.value / (u**5 * (1 / 80) ** 4) == pytest.approx(4.06, abs=0.1)


def test_insufficient_resolution_raised_when_resolution_poor(monkeypatch):
    monkeypatch.setattr(geo, "UNKNOWN_LIMIT", 0.0)
    with pytest.raises(InsufficientResolution):
        geo.sample_ball(np.array([0.9, 0.0]), 1 / 80, 2000, 0, refine=0)


# ---------------------------------------------------------------------------
# lattice


@pytest.fixture(scope="module")
def small_lattice():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RadiusWarning)
        return geo.build_lattice(1 / 80, seed=1, n=1, window=geo.Window(np.array([0.5 + 0j]), 0.08))


def test_lattice_separated_and_covering(small_lattice):
    rep = geo.verify_lattice(small_lattice, probes=500, seed=2)
    assert rep.centers > 50
    assert rep.max_quarter_count <= 1
    assert rep.uncovered == 0
    assert rep.ok
    assert 1 <= rep.overlap <= 60


def test_lattice_overlap_stable_under_reseeding(small_lattice):
    other = geo.build_lattice(1 / 80, seed=5, n=1, window=geo.Window(np.array([0.5 + 0j]), 0.08))
    a, b = small_lattice.overlap_bound, other.overlap_bound
    assert a > 0 and b > 0
    assert max(a, b) / min(a, b) < 2


def test_lattice_pairs_certified(small_lattice):
    C = small_lattice.centers
    rng = np.random.default_rng(0)
    idx = rng.choice(len(C), size=(40, 2))
    for i, j in idx:
        if i != j:
            assert geo.sigma_lower(C[i], C[j][None])[0] >= 1 / 80 or geo.sigma_lower(C[j], C[i][None])[0] >= 1 / 80 or \
                geo._separated_from(C[i], C[j][None], np.array([geo._comparison(C[j]).displacement(1 / 80)]), 1 / 80)[0]


# ---------------------------------------------------------------------------
# Lipschitz norm and automorphisms


def test_lipschitz_examples():
    assert geo.lipschitz_ratio(np.zeros(1), np.array([0.3]))[0] == pytest.approx(0.3)
    e = 1e-3
    assert geo.lipschitz_ratio(np.array([1 - e]), np.array([1 - 2 * e]))[0] == pytest.approx(2 - 3 * e, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_lipschitz_probe_bounds(n):
    val = geo.lipschitz_norm_probe(4000, seed=n, n=n)
    assert val <= 2 + 1e-12
    assert val >= 1.97


def test_automorphism_examples(rng):
    z = random_point(rng, 3, 0.9)
    np.testing.assert_allclose(geo.automorphism(z, z[None]), 0, atol=1e-14)
    W = np.array([random_point(rng, 3, 0.9) for _ in range(5)])
    np.testing.assert_allclose(geo.automorphism(np.zeros(3), W), -W)
    np.testing.assert_allclose(geo.automorphism(z, geo.automorphism(z, W)), W, atol=1e-10)
