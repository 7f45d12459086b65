"""A short tour of the Hessian geometry of the exponential weight on the ball.

Prints closed-form checks, a certified distance interval, how the metric ball
volume scales towards the boundary, and an inclusion audit.
"""
import numpy as np

from expbergman import geometry as geo


def main():
    z = np.array([0.6, 0.3j])
    H = geo.hessian(z)
    print("Hessian at z =", z)
    print(np.round(H, 4))
    print("det (closed form):", geo.hessian_det(z), " numerical:", np.linalg.det(H).real)

    w = np.array([0.62, 0.31j])
    est = geo.sigma_estimate(z, w)
    print(f"\ndistance interval sigma(z, w) in [{est.lower:.6f}, {est.upper:.6f}]  ({est.status.value})")

    r = 1 / 80
    print("\n|z|    volume(B_H(z, r)) / (1-|z|^2)^5      (n = 2)")
    for t in (0.0, 0.5, 0.9, 0.99):
        p = np.array([t, 0.0])
        vol = geo.ball_volume(p, r, samples=20000, seed=1)
        print(f"{t:4.2f}   {vol.value / float(geo.defect(p)) ** 5:.6e} +- {vol.stderr / float(geo.defect(p)) ** 5:.1e}")

    audit = geo.inclusion_audit(np.array([0.9, 0.0]), r, 2000, np.random.default_rng(0))
    print(f"\ninclusion audit at |z| = 0.9: {audit.violations} violations "
          f"({audit.inner_checked} inner, {audit.outer_checked} outer points)")


if __name__ == "__main__":
    main()
