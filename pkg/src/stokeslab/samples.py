"""Documented sample unfoldings used by the test suite and example configs.

Coefficients are binary-exact decimals so the conservative (divergence-free)
cancellations hold exactly at any working precision.  The z^3 coefficient of
hbar pairs with the x z^2 / y z^2 terms: h3 = -2a/3 with a chosen so that
this is exact (a = 3/4 or 3/16).
"""
from __future__ import annotations

from .model import UnfoldingSpec


def sample_conservative() -> UnfoldingSpec:
    """Cubic conservative unfolding with a nonzero-mean inner forcing term."""
    return UnfoldingSpec(
        alpha0=1, beta1=1, gamma2=1, h3="-0.5",
        fbar={(1, 0, 2, 0, 0): "0.75", (0, 3, 0, 0, 0): "0.125"},
        gbar={(0, 1, 2, 0, 0): "0.75", (3, 0, 0, 0, 0): "-0.125"},
        hbar={(0, 0, 3, 0, 0): "-0.5", (3, 0, 0, 0, 0): "0.125"},
        conservative=True)


def sample_dissipative() -> UnfoldingSpec:
    """Same cubic terms plus a volume-contracting x^3 component in fbar."""
    return UnfoldingSpec(
        alpha0=1, beta1=1, gamma2=1, h3="-0.5",
        fbar={(1, 0, 2, 0, 0): "0.75", (0, 3, 0, 0, 0): "0.125",
              (3, 0, 0, 0, 0): "0.125"},
        gbar={(0, 1, 2, 0, 0): "0.75", (3, 0, 0, 0, 0): "-0.125"},
        hbar={(0, 0, 3, 0, 0): "-0.5", (3, 0, 0, 0, 0): "0.125"},
        conservative=False)


def sample_matching() -> UnfoldingSpec:
    """Small-coefficient conservative variant; its inner fixed point still
    contracts on the shallow domains needed by the matching window."""
    return UnfoldingSpec(
        alpha0=1, beta1=1, gamma2=1, h3="-0.0625",
        fbar={(1, 0, 2, 0, 0): "0.09375", (0, 3, 0, 0, 0): "0.03125"},
        gbar={(0, 1, 2, 0, 0): "0.09375", (3, 0, 0, 0, 0): "-0.03125"},
        hbar={(0, 0, 3, 0, 0): "-0.0625", (3, 0, 0, 0, 0): "0.03125"},
        conservative=True)


def zero_perturbation() -> UnfoldingSpec:
    return UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, conservative=True)
