"""Quadrature rules and singular element-pair integrals."""

from .boundary_flux import appendix_integrals, boundary_flux_moments_1d
from .pairs import PairBlock, pair_integral_1d, pair_integral_2d
from .rules import (
    QuadratureRule,
    far_field_order,
    gauss_jacobi,
    gauss_jacobi_symmetric,
    gauss_legendre,
    graded_rule_01,
    subdivided_triangle_rule,
    triangle_rule,
)
from .tail import TailSpec, kernel_weight_1d, kernel_weight_polygon, tail_flux_integral, tail_kernel_moments

__all__ = [
    "PairBlock",
    "QuadratureRule",
    "TailSpec",
    "appendix_integrals",
    "boundary_flux_moments_1d",
    "far_field_order",
    "gauss_jacobi",
    "gauss_jacobi_symmetric",
    "gauss_legendre",
    "graded_rule_01",
    "kernel_weight_1d",
    "kernel_weight_polygon",
    "pair_integral_1d",
    "pair_integral_2d",
    "subdivided_triangle_rule",
    "tail_flux_integral",
    "tail_kernel_moments",
    "triangle_rule",
]
