"""Richardson-type limit extrapolation for power-law error models."""
from __future__ import annotations

from gmpy2 import mpc, mpfr

from ..precision import PrecisionCtx


class ExtrapolationError(ValueError):
    pass


def extrapolate_limit(samples, p, ctx: PrecisionCtx):
    """Limit of v(x) as x -> 0+ assuming v = v0 + c1 x^p + c2 x^{p+1} + ...

    samples: list of (x, value) with x real > 0 strictly decreasing.
    Returns (limit, error_indicator).  The indicator is the difference
    between the last two elimination stages (plus the last column step),
    a standard a-posteriori proxy for the remaining error.
    """
    with ctx.active():
        if len(samples) < 3:
            raise ExtrapolationError("need at least 3 samples")
        xs = [mpfr(x) for x, _ in samples]
        vs = [mpc(v) for _, v in samples]
        for a, b in zip(xs[:-1], xs[1:]):
            if not (a > b > 0):
                raise ExtrapolationError("x values must be strictly decreasing and positive")
        n = len(xs)
        p = mpfr(p)
        tab = [vs[:]]
        for k in range(1, n):
            q = p + (k - 1)
            col = []
            prev = tab[k - 1]
            for i in range(n - k):
                xi_h = xs[i] ** q       # coarser
                xi_l = xs[i + k] ** q   # finer
                col.append((xi_h * prev[i + 1] - xi_l * prev[i]) / (xi_h - xi_l))
            tab.append(col)
        limit = tab[-1][0]
        if n >= 2:
            alt = tab[-2][-1]
            indicator = abs(limit - alt)
            if len(tab[-2]) >= 2:
                indicator = max(indicator, abs(tab[-2][-1] - tab[-2][-2]))
        else:
            indicator = mpfr(0)
        return limit, indicator


def fit_log_slope(xs, vals, ctx: PrecisionCtx):
    """Least-squares slope of log|v| vs log x (decay-exponent fits)."""
    import gmpy2
    with ctx.active():
        pts = [(gmpy2.log(mpfr(abs(x))), gmpy2.log(mpfr(abs(v))))
               for x, v in zip(xs, vals) if abs(v) > 0]
        n = len(pts)
        if n < 2:
            raise ExtrapolationError("need at least 2 nonzero samples for a slope fit")
        sx = sum(a for a, _ in pts)
        sy = sum(b for _, b in pts)
        sxx = sum(a * a for a, _ in pts)
        sxy = sum(a * b for a, b in pts)
        den = n * sxx - sx * sx
        slope = (n * sxy - sx * sy) / den
        intercept = (sy - slope * sx) / n
        return slope, intercept
