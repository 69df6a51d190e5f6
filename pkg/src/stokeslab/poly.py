"""Sparse multivariate polynomials over arbitrary-precision complex numbers.

Exponent keys are integer tuples of a fixed arity.  This is deliberately
minimal: evaluation, partial derivatives, degree filters and the scaling
bookkeeping needed by the model layer.  No symbolic algebra.
"""
from __future__ import annotations

from gmpy2 import mpc, mpfr


class Poly:
    """coeffs: {exponent tuple -> complex coefficient}."""

    __slots__ = ("nvars", "coeffs")

    def __init__(self, nvars: int, coeffs: dict | None = None):
        self.nvars = nvars
        self.coeffs = {}
        if coeffs:
            for k, v in coeffs.items():
                k = tuple(int(e) for e in k)
                if len(k) != nvars:
                    raise ValueError(f"exponent {k} has wrong arity (expected {nvars})")
                v = mpc(v)
                if v != 0:
                    self.coeffs[k] = self.coeffs.get(k, mpc(0)) + v
        self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0}

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def monomial(cls, nvars: int, expo, coeff=1) -> "Poly":
        return cls(nvars, {tuple(expo): coeff})

    def __bool__(self):
        return bool(self.coeffs)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, mpc(0)) + v
        return Poly(self.nvars, out)

    def __mul__(self, other):
        if isinstance(other, Poly):
            out: dict = {}
            for k1, v1 in self.coeffs.items():
                for k2, v2 in other.coeffs.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    out[k] = out.get(k, mpc(0)) + v1 * v2
            return Poly(self.nvars, out)
        return Poly(self.nvars, {k: v * mpc(other) for k, v in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1)

    def __sub__(self, other):
        return self + (-other)

    def eval(self, args) -> mpc:
        """Evaluate at a point; powers are cached per call."""
        pows = [None] * self.nvars
        tot = mpc(0)
        for expo, coef in self.coeffs.items():
            term = coef
            for i, e in enumerate(expo):
                if e == 0:
                    continue
                if pows[i] is None:
                    pows[i] = {}
                p = pows[i].get(e)
                if p is None:
                    base = mpc(args[i])
                    p = base
                    for _ in range(e - 1):
                        p = p * base
                    pows[i][e] = p
                term = term * p
            tot += term
        return tot

    def diff(self, var: int) -> "Poly":
        out = {}
        for expo, coef in self.coeffs.items():
            e = expo[var]
            if e == 0:
                continue
            k = tuple(ei - 1 if i == var else ei for i, ei in enumerate(expo))
            out[k] = out.get(k, mpc(0)) + coef * e
        return Poly(self.nvars, out)

    def min_degree(self) -> int:
        if not self.coeffs:
            return 0
        return min(sum(k) for k in self.coeffs)

    def max_degree(self) -> int:
        if not self.coeffs:
            return 0
        return max(sum(k) for k in self.coeffs)

    def filter(self, predicate) -> "Poly":
        return Poly(self.nvars, {k: v for k, v in self.coeffs.items() if predicate(k)})

    def subs_prefactor(self, weights) -> list[tuple[int, tuple, mpc]]:
        """Return (total weight, exponent, coeff) per monomial.

        ``weights[i]`` is the power of the scale parameter carried by one
        power of variable i; used for the delta-recomposition of the model.
        """
        out = []
        for expo, coef in self.coeffs.items():
            w = sum(wi * ei for wi, ei in zip(weights, expo))
            out.append((w, expo, coef))
        return out

    def compiled3(self):
        """Fast evaluator (X, Y, Z) -> value for a trivariate polynomial."""
        if self.nvars != 3:
            raise ValueError("compiled3 requires a 3-variable polynomial")
        items = sorted(self.coeffs.items())
        coefs = [v for _, v in items]
        terms = []
        for idx, (expo, _) in enumerate(items):
            factors = [f"C[{idx}]"]
            for var, e in zip(("X", "Y", "Z"), expo):
                factors.extend([var] * e)
            terms.append("*".join(factors))
        body = " + ".join(terms) if terms else "ZERO"
        ns = {"C": coefs, "ZERO": mpc(0)}
        exec(f"def _f(X, Y, Z):\n    return {body}", ns)
        return ns["_f"]

    def __repr__(self):
        terms = sorted(self.coeffs.items())
        return "Poly(" + " + ".join(f"{v}*x^{k}" for k, v in terms) + ")" if terms else "Poly(0)"
