"""Arbitrary-precision arithmetic context shared by every solver stage.

All heavy kernels run on gmpy2 (MPFR/MPC) numbers.  A ``PrecisionCtx`` is an
immutable value object; operations that need a specific precision activate it
locally so concurrently running workers (separate processes) never interfere.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpc, mpfr

DEFAULT_BITS = 192


class PrecisionError(ValueError):
    pass


@dataclass(frozen=True)
class PrecisionCtx:
    """Working mantissa width plus integration/quadrature tolerances."""

    mantissa_bits: int = DEFAULT_BITS
    abs_tol: float | str = "1e-30"
    rel_tol: float | str = "1e-30"

    def __post_init__(self):
        if int(self.mantissa_bits) < 64:
            raise PrecisionError(f"mantissa_bits must be >= 64, got {self.mantissa_bits}")
        with self.active():
            at, rt = mpfr(self.abs_tol), mpfr(self.rel_tol)
            floor = mpfr(2) ** (-int(self.mantissa_bits) + 8)
            if not (at > 0 and rt > 0):
                raise PrecisionError("tolerances must be positive")
            if at < floor or rt < floor:
                raise PrecisionError(
                    f"tolerance below representable floor 2^{-int(self.mantissa_bits) + 8}"
                )

    @contextlib.contextmanager
    def active(self):
        old = gmpy2.get_context()
        gmpy2.set_context(gmpy2.context(precision=int(self.mantissa_bits),
                                        allow_complex=True))
        try:
            yield self
        finally:
            gmpy2.set_context(old)

    def with_bits(self, bits: int) -> "PrecisionCtx":
        return PrecisionCtx(bits, self.abs_tol, self.rel_tol)

    @property
    def atol(self) -> mpfr:
        return mpfr(self.abs_tol)

    @property
    def rtol(self) -> mpfr:
        return mpfr(self.rel_tol)

    @property
    def eps(self) -> mpfr:
        return mpfr(2) ** (-int(self.mantissa_bits))


def R(x) -> mpfr:
    """Real constant at the active precision."""
    if isinstance(x, mpc):
        if x.imag != 0:
            raise ValueError(f"non-real value {x}")
        return x.real
    return mpfr(x)


def C(x, y=None) -> mpc:
    """Complex constant at the active precision."""
    if y is None:
        return mpc(x)
    return mpc(mpfr(x), mpfr(y))


def pi() -> mpfr:
    return gmpy2.const_pi()


def hypot2(z: mpc) -> mpfr:
    return gmpy2.norm(z)  # |z|^2


def num_str(x) -> str:
    """Lossless round-trippable decimal string (used for text caches)."""
    if isinstance(x, mpc):
        return f"{num_str(x.real)} {num_str(x.imag)}"
    r = repr(mpfr(x))
    return r[r.index("'") + 1:r.rindex("'")]


def parse_num(s: str):
    parts = s.split()
    if len(parts) == 2:
        return mpc(mpfr(parts[0]), mpfr(parts[1]))
    return mpfr(parts[0])


def fmt(x, digits: int = 17) -> str:
    """Fixed-width scientific string for reports (deterministic)."""
    if isinstance(x, mpc):
        return f"{fmt(x.real, digits)}{'+' if x.imag >= 0 else '-'}{fmt(abs(x.imag), digits)}j"
    m = mpfr(x)
    if gmpy2.is_nan(m):
        return "nan"
    if gmpy2.is_infinite(m):
        return "inf" if m > 0 else "-inf"
    if m == 0:
        return "0." + "0" * (digits - 1) + "e+00"
    dstr, exp, _ = m.digits(10, digits)
    neg = dstr.startswith("-")
    if neg:
        dstr = dstr[1:]
    return ("-" if neg else "") + f"{dstr[0]}.{dstr[1:]}e{exp - 1:+03d}"
