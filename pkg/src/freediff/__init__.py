"""Free diffusions with locally convex potentials, simulated on Hermitian matrix models."""

from .ncpoly import (
    DimensionError,
    DomainError,
    Letter,
    NCPoly,
    PolyError,
    TensorPoly,
    adjoint,
    cyclic_grad,
    diff_quot,
    evaluate,
    gradient,
    is_self_adjoint,
    nc_add,
    nc_mul,
    nc_scale,
    tensor_mul_flip_contract,
)
from .polylang import PolySyntaxError, parse_poly, print_poly, print_tensor

__version__ = "0.1.0"
