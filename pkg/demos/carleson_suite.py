"""Classify three model measures as (vanishing) Carleson measures.

The averaged transform mu_hat is traced towards the boundary; its tail decides
the verdict. Lebesgue measure is Carleson but not vanishing, the measure
(1-|z|^2)^{1/2} dv is vanishing, and (1-|z|^2)^{-1/2} dv is not Carleson.
"""
from expbergman import carleson as carl
from expbergman.quadrature import IntegrationConfig


def main():
    cfg = IntegrationConfig(samples=20000, seed=0)
    for mu in (carl.LebesgueVolume(), carl.power_density(0.5), carl.power_density(-0.5)):
        rep = carl.carleson_check(mu, 2.0, 1 / 80, cfg=cfg, n=1, rays=3)
        print(f"\nmeasure {rep.measure}: {rep.verdict.value}, {rep.vanishing_verdict.value} "
              f"(tail exponent {rep.tail_exponent:+.3f})")
        print("  |z|     mu_hat      ball ratio")
        for t, m, b in rep.boundary_trace:
            print(f"  {t:4.2f}  {m:10.4f}  {b:10.4f}")


if __name__ == "__main__":
    main()
