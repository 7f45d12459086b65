"""Cesaro and Toeplitz operators, and the truncated Bergman kernel.

Shows the exact Cesaro identity on polynomials, the bounded-versus-compact
symbol statistics, a Toeplitz finite section with its Berezin-type transform,
and the normalized kernel diagonal as the truncation degree grows.
"""
import numpy as np

from expbergman import carleson as carl
from expbergman import operators as ops
from expbergman.funcspace import MonomialFunction, radial_derivative
from expbergman.quadrature import IntegrationConfig


def main():
    f = MonomialFunction({(0,): 1, (2,): 3}, 1)
    g = MonomialFunction.coordinate(0, 1, 2)
    V = ops.cesaro_apply(g, f)
    print("V_g f =", V.terms, " identity R(V_g f) = f Rg:", radial_derivative(V) == f * radial_derivative(g))

    grid = (0.0, 0.5, 0.9, 0.99)
    for name, sym in (("z1", MonomialFunction.coordinate(0, 1)), ("kernel", ops.KernelSymbol(np.array([1.0])))):
        s = ops.cesaro_symbol_statistic(sym, grid)
        print(f"symbol {name:6s} |Rg|(1-|z|^2)^2 along e1:", [round(v, 4) for _, v, _ in s.boundary_trace])

    cfg = IntegrationConfig(samples=20000, seed=0)
    basis = ops.OrthonormalBasis(1, 30)
    u = carl.power_density(0.5)
    M = ops.toeplitz_matrix(basis, u, cfg)
    print("\nToeplitz diagonal for (1-|w|^2)^{1/2}:", np.round(M.diagonal()[[0, 5, 10, 20, 30]], 4))
    print("finite-section norm probe:", round(ops.toeplitz_norm_probe(M), 4))
    print("u_hat along e1:", [round(ops.u_hat(u, np.array([t]), cfg).value, 4) for t in grid])

    tr = ops.kernel_diagonal_bound(basis, (0.0, 0.4, 0.8), (10, 20, 30))
    print("\nnormalized kernel diagonal (rows N = 10, 20, 30; columns |z| = 0, 0.4, 0.8)")
    print(np.round(tr.values, 4))


if __name__ == "__main__":
    main()
