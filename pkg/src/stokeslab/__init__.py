"""stokeslab: splitting of 2D invariant manifolds in Hopf-zero unfoldings.

Desk-scale, high-precision numerical laboratory: inner-equation solutions,
Stokes constants, direct measurement of the exponentially small splitting,
and verification of the predicted asymptotic distance law.
"""
from .precision import PrecisionCtx

__version__ = "0.1.0"
__all__ = ["PrecisionCtx", "__version__"]
