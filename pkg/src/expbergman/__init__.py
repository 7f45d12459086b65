"""Exponential Bergman spaces on the unit ball: metric geometry, quadrature and operators."""
