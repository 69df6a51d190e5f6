"""Predicted splitting law and fits of measured data against it.

The scaled first-harmonic amplitude 2|D_1| follows

    delta^(-2-2/d) cosh^(2/d)(d v) e^{-alpha0 pi/(2 d delta)} |C*| (1 + O(1/log(1/delta)))

and the original-variable distance amplitude (reported by Theorem-style
formulas) is that times delta cosh(d v) sqrt(b/(d+1)), i.e. it scales like
delta^(-1-2/d) cosh^(1+2/d).  The fitter works on the original-variable
amplitude, so the reference prefactor power is 1 + 2/beta1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .model import UnfoldingSpec
from .precision import PrecisionCtx, C, R
from .stokes import StokesData


class FitError(ValueError):
    pass


@dataclass
class PredictedLaw:
    exponent_rate: mpfr          # alpha0 pi / (2 beta1)
    prefactor_power: mpfr        # 1 + 2/beta1
    cosh_power: mpfr             # 1 + 2/beta1
    c_star_abs: mpfr
    c_star: mpc | None
    L0: mpc
    conservative: bool

    @classmethod
    def from_stokes(cls, spec: UnfoldingSpec, sd: StokesData, ctx: PrecisionCtx) -> "PredictedLaw":
        with ctx.active():
            pi = gmpy2.const_pi()
            rate = R(spec.alpha0) * pi / (2 * spec.d)
            power = 1 + 2 / spec.d
            return cls(rate, power, power, sd.c_star_abs, sd.c_star, sd.L0,
                       spec.conservative)


def theta_bar(v, mu, spec: UnfoldingSpec, l0, ctx: PrecisionCtx, l_fn=None):
    """Phase offset of the distance law at section abscissa v."""
    with ctx.active():
        v, mu = R(v), R(mu)
        if mu <= 0:
            raise FitError("mu must be positive")
        a0, a3, b1 = R(spec.alpha0), R(spec.alpha3), R(spec.beta1)
        lv = R(l_fn(v)) if l_fn is not None else mpfr(0)
        return (a0 * v / gmpy2.sqrt(mu)
                + (a3 + a0 * R(l0)) / b1 * (gmpy2.log(gmpy2.cosh(b1 * v))
                                            - gmpy2.log(mu) / 2)
                + a0 * lv)


def scaled_phase(v, delta, spec: UnfoldingSpec, l0, ctx: PrecisionCtx, l_fn=None):
    """theta_bar written with delta (identical value, scaled bookkeeping)."""
    with ctx.active():
        return theta_bar(v, R(delta) ** 2, spec, l0, ctx, l_fn=l_fn)


def upsilon0_coeffs(sd: StokesData, delta, spec: UnfoldingSpec, ctx: PrecisionCtx,
                    l_plus=None) -> dict:
    """First-order outer coefficients Upsilon_0^[l] from the inner ones.

    l < 0:  delta^{-2-2/d} (-i)^{2/d} Ups_in^[l]
            e^{(c + alpha L0)/d (-il log delta + l pi/2) - il alpha L+}
            e^{l alpha pi/(2 d delta)};
    l > 0 by conjugation (real-analytic difference).
    """
    with ctx.active():
        delta = R(delta)
        alpha = spec.alpha_of(0, 0)
        d, c = spec.d, spec.c
        pi = gmpy2.const_pi()
        lp = mpc(l_plus) if l_plus is not None else (
            mpc(sd.L_plus) if sd.L_plus is not None else mpc(0))
        out = {}
        pref = delta ** (-2 - 2 / d) * mpc(0, -1) ** (2 / d)
        for l, u in sd.upsilon_in.items():
            if l >= 0:
                continue
            ph = (c + alpha * mpc(sd.L0)) / d * (-mpc(0, 1) * l * gmpy2.log(delta) + l * pi / 2) \
                - mpc(0, 1) * l * alpha * lp
            val = pref * mpc(u) * gmpy2.exp(ph) * gmpy2.exp(l * alpha * pi / (2 * d * delta))
            out[l] = val
            out[-l] = val.conjugate()
        return out


def predicted_distance(v, theta, mu, law: PredictedLaw, spec: UnfoldingSpec,
                       ctx: PrecisionCtx, case=None, l_fn=None):
    """Original-variable distance prediction of the asymptotic law.

    Needs C1*, C2* (law.c_star); with amplitude-only data use
    predicted_amplitude instead.  The O(1/|log mu|) remainder is reported
    separately by the fit, never added here.
    """
    with ctx.active():
        case = case or ("conservative" if law.conservative else "dissipative")
        if case == "conservative" and not law.conservative:
            raise FitError("conservative case requested for a dissipative law")
        if law.c_star is None:
            raise FitError("C1*, C2* unavailable (phase not fitted); use predicted_amplitude")
        v, mu = R(v), R(mu)
        delta = gmpy2.sqrt(mu)
        b1 = spec.d
        tb = theta_bar(v, mu, spec, law.L0, ctx, l_fn=l_fn)
        c1, c2 = law.c_star.real, law.c_star.imag
        bracket = c1 * gmpy2.cos(theta + tb) + c2 * gmpy2.sin(theta + tb)
        pref = gmpy2.sqrt(spec.b / (b1 + 1)) * gmpy2.cosh(b1 * v) ** (1 + 2 / b1) \
            * delta ** (-(1 + 2 / b1)) * gmpy2.exp(-R(spec.alpha0) * gmpy2.const_pi()
                                                   / (2 * b1 * delta))
        return pref * bracket


def predicted_amplitude(v, mu, law: PredictedLaw, spec: UnfoldingSpec,
                        ctx: PrecisionCtx):
    """Envelope amplitude of the predicted law (phase-free)."""
    with ctx.active():
        v, mu = R(v), R(mu)
        delta = gmpy2.sqrt(mu)
        b1 = spec.d
        return gmpy2.sqrt(spec.b / (b1 + 1)) * gmpy2.cosh(b1 * v) ** (1 + 2 / b1) \
            * delta ** (-(1 + 2 / b1)) * gmpy2.exp(-R(spec.alpha0) * gmpy2.const_pi()
                                                   / (2 * b1 * delta)) * law.c_star_abs


def scaled_amp1_prediction(v, delta, law: PredictedLaw, spec: UnfoldingSpec,
                           ctx: PrecisionCtx):
    """Predicted 2|D_1| in scaled units (the directly measured harmonic)."""
    with ctx.active():
        v, delta = R(v), R(delta)
        d = spec.d
        return delta ** (-2 - 2 / d) * gmpy2.cosh(d * v) ** (2 / d) \
            * gmpy2.exp(-R(spec.alpha0) * gmpy2.const_pi() / (2 * d * delta)) \
            * law.c_star_abs


def amp1_to_original(amp1, v, delta, spec: UnfoldingSpec, ctx: PrecisionCtx):
    """Convert the scaled first-harmonic amplitude to original-variable units:
    multiply by delta cosh(d v) sqrt(b/(d+1))  (the sqrt(2 R0)-normalization)."""
    with ctx.active():
        return R(amp1) * R(delta) * gmpy2.cosh(spec.d * R(v)) \
            * gmpy2.sqrt(spec.b / (spec.d + 1))


@dataclass
class FitReport:
    rate_hat: mpfr
    power_hat: mpfr
    intercept: mpfr
    rate_ref: mpfr
    power_ref: mpfr
    rate_rel_err: mpfr
    power_rel_err: mpfr
    phase_hat: mpfr | None
    phase_scatter: mpfr | None
    rows: list                       # per point dicts
    ratio_band_A: mpfr | None = None
    band_widths: list = field(default_factory=list)
    residual_log_trend: list = field(default_factory=list)


def _solve_sym3(m, r):
    import copy
    a = [row[:] + [r[i]] for i, row in enumerate(m)]
    n = 3
    for col in range(n):
        piv = max(range(col, n), key=lambda q: abs(a[q][col]))
        a[col], a[piv] = a[piv], a[col]
        dv = a[col][col]
        a[col] = [x / dv for x in a[col]]
        for q in range(n):
            if q != col and a[q][col] != 0:
                f = a[q][col]
                a[q] = [x - f * y for x, y in zip(a[q], a[col])]
    return [a[i][n] for i in range(n)]


def fit_exponential_law(entries, law: PredictedLaw, spec: UnfoldingSpec,
                        ctx: PrecisionCtx, weighted: bool = False,
                        require_snr: bool = True) -> FitReport:
    """ln(amp_phys) = -rate (1/delta) + power ln(1/delta) + const, then
    compare with the predicted (rate, power) and fit the residual phase."""
    with ctx.active():
        if len(entries) < 4:
            raise FitError("need at least 4 mu values for the exponential-law fit")
        deltas = [R(e.delta) for e in entries]
        if max(deltas) / min(deltas) < mpfr("1.99"):
            raise FitError("mu grid too narrow: 1/delta must span a factor >= 2")
        rows = []
        xs, ys, ws = [], [], []
        for e in entries:
            if require_snr and not (e.amp1 > 10 * e.err_bar):
                raise FitError(f"amp1 at delta={float(e.delta):.3f} below 10x its error bar")
            amp_phys = amp1_to_original(e.amp1, e.v, e.delta, spec, ctx)
            x1 = 1 / R(e.delta)
            xs.append(x1)
            ys.append(gmpy2.log(amp_phys))
            ws.append(1 / gmpy2.log(1 + e.err_bar / e.amp1 + mpfr("1e-30")) if weighted else mpfr(1))
        n = len(xs)
        w = [mpfr(1)] * n if not weighted else [x / max(ws) for x in ws]
        # design: [-x, log x, 1]
        cols = [[-x for x in xs], [gmpy2.log(x) for x in xs], [mpfr(1)] * n]
        m = [[sum(w[r] * cols[i][r] * cols[j][r] for r in range(n)) for j in range(3)]
             for i in range(3)]
        rhs = [sum(w[r] * cols[i][r] * ys[r] for r in range(n)) for i in range(3)]
        try:
            rate_hat, power_hat, intercept = _solve_sym3(m, rhs)
        except ZeroDivisionError:
            raise FitError("ill-conditioned design matrix (mu grid too narrow)")
        rate_ref, power_ref = law.exponent_rate, law.prefactor_power
        # phase: arg(D_1 e^{-i theta_bar-ish}) should be delta-independent
        phases = []
        for e in entries:
            d1 = e.dhat.get(1)
            if d1 is None or abs(d1) == 0:
                continue
            ph = scaled_phase(e.v, e.delta, spec, law.L0, ctx)
            val = mpc(d1) * gmpy2.exp(-mpc(0, 1) * ph)
            phases.append(gmpy2.atan2(val.imag, val.real))
        phase_hat = None
        scatter = None
        if phases:
            cs = sum(gmpy2.cos(p) for p in phases) / len(phases)
            sn = sum(gmpy2.sin(p) for p in phases) / len(phases)
            phase_hat = gmpy2.atan2(sn, cs)
            scatter = max(abs(gmpy2.atan2(gmpy2.sin(p - phase_hat),
                                          gmpy2.cos(p - phase_hat))) for p in phases)
        # per-point ratio vs the scaled prediction and the log-remainder trend
        band_A = None
        widths = []
        trend = []
        for e, x1, y in zip(entries, xs, ys):
            pred = scaled_amp1_prediction(e.v, e.delta, law, spec, ctx)
            row = {"delta": R(e.delta), "inv_delta": x1, "ln_amp_phys": y,
                   "amp1": R(e.amp1)}
            if law.c_star_abs > 0:
                ratio = R(e.amp1) / pred
                row["ratio"] = ratio
                L = gmpy2.log(1 / R(e.delta))
                a_here = abs(ratio - 1) * L
                band_A = a_here if band_A is None else max(band_A, a_here)
                trend.append(a_here)
                widths.append(2 * a_here / L)
            rows.append(row)
        if band_A is not None:
            widths = [2 * band_A / gmpy2.log(1 / R(e.delta)) for e in entries]
        return FitReport(rate_hat, power_hat, intercept, rate_ref, power_ref,
                         abs(rate_hat - rate_ref) / rate_ref,
                         abs(power_hat - power_ref) / power_ref,
                         phase_hat, scatter, rows, band_A, widths, trend)
