"""Taylor-series integration of polynomial vector fields at arbitrary precision.

The field is compiled once into a small DAG of series nodes (variables,
products, linear combinations).  Each integration step extends every node's
truncated Taylor series order by order, which costs one length-k convolution
per product node and order k.  Order and step size follow the classical
rules for variable-order Taylor methods: order ~ -ln(tol)/2 and the step from
the magnitudes of the last two computed coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from gmpy2 import mpc, mpfr

from ..poly import Poly
from ..precision import PrecisionCtx


class IntegrationError(RuntimeError):
    pass


class StepUnderflow(IntegrationError):
    pass


class EventNotFound(IntegrationError):
    pass


class _Var:
    __slots__ = ("idx", "c")

    def __init__(self, idx):
        self.idx = idx
        self.c = None  # bound to the state series list each step


class _Mul:
    __slots__ = ("a", "b", "c")

    def __init__(self, a, b):
        self.a, self.b = a, b
        self.c = []

    def extend(self, k):
        ac, bc = self.a.c, self.b.c
        s = ac[0] * bc[k]
        for j in range(1, k + 1):
            s += ac[j] * bc[k - j]
        self.c.append(s)


class _Lin:
    """Linear combination sum(coef * node) + bias (bias only at order 0)."""

    __slots__ = ("terms", "bias", "c")

    def __init__(self, terms, bias):
        self.terms = terms
        self.bias = bias
        self.c = []

    def extend(self, k):
        s = mpc(self.bias) if k == 0 else mpc(0)
        for coef, node in self.terms:
            s += coef * node.c[k]
        self.c.append(s)


class PolynomialField:
    """dy_i/dt = P_i(y) with P_i sparse polynomials in the state variables."""

    def __init__(self, components: list[Poly]):
        self.ndim = len(components)
        for p in components:
            if p.nvars != self.ndim:
                raise ValueError("component arity mismatch")
        self.components = components
        self._compile()

    def _compile(self):
        self.vars = [_Var(i) for i in range(self.ndim)]
        memo: dict = {}
        muls: list[_Mul] = []

        def power_node(i, e):
            if e == 1:
                return self.vars[i]
            key = ("p", i, e)
            if key not in memo:
                n = _Mul(power_node(i, e - 1), self.vars[i])
                muls.append(n)
                memo[key] = n
            return memo[key]

        def monomial_node(expo):
            key = ("m", expo)
            if key in memo:
                return memo[key]
            factors = [(i, e) for i, e in enumerate(expo) if e > 0]
            node = None
            # build left-to-right, memoizing prefixes
            prefix = []
            for i, e in factors:
                prefix.append((i, e))
                pkey = ("m", tuple(prefix))
                if pkey in memo:
                    node = memo[pkey]
                    continue
                pw = power_node(i, e)
                if node is None:
                    node = pw
                else:
                    node = _Mul(node, pw)
                    muls.append(node)
                memo[pkey] = node
            memo[key] = node
            return node

        self.outputs = []
        for p in self.components:
            terms = []
            bias = mpc(0)
            for expo, coef in p.coeffs.items():
                if all(e == 0 for e in expo):
                    bias += coef
                else:
                    terms.append((coef, monomial_node(expo)))
            self.outputs.append(_Lin(terms, bias))
        self.muls = muls

    def eval(self, y):
        return [p.eval(y) for p in self.components]

    def jacobian(self, y):
        return [[p.diff(j).eval(y) for j in range(self.ndim)] for p in self.components]

    def taylor(self, y0, order: int, tdir) -> list[list[mpc]]:
        """Taylor coefficients of the solution along t = t0 + tdir*tau."""
        ys = [[mpc(v)] for v in y0]
        for v in self.vars:
            v.c = ys[v.idx]
        for n in self.muls:
            n.c = []
        for o in self.outputs:
            o.c = []
        tdir = mpc(tdir)
        for k in range(order):
            for n in self.muls:
                n.extend(k)
            for i, o in enumerate(self.outputs):
                o.extend(k)
                ys[i].append(tdir * o.c[k] / (k + 1))
        return ys


def eval_series(coeffs: list[mpc], tau) -> mpc:
    acc = mpc(0)
    for c in reversed(coeffs):
        acc = acc * tau + c
    return acc


def eval_series_deriv(coeffs: list[mpc], tau) -> mpc:
    acc = mpc(0)
    for k in range(len(coeffs) - 1, 0, -1):
        acc = acc * tau + coeffs[k] * k
    return acc


@dataclass
class Step:
    t0: mpc          # segment-local start time (absolute)
    tdir: mpc        # unit direction in complex t
    h: mpfr          # real parameter length of the step
    series: list     # per-component Taylor coefficients in tau

    def state(self, tau) -> list[mpc]:
        return [eval_series(s, tau) for s in self.series]

    @property
    def t_end(self) -> mpc:
        return self.t0 + self.tdir * self.h


class Trajectory:
    """Dense-output record of one integration run."""

    def __init__(self, ctx: PrecisionCtx):
        self.ctx = ctx
        self.steps: list[Step] = []
        self.events: list[tuple[mpc, list[mpc]]] = []

    @property
    def t_end(self) -> mpc:
        return self.steps[-1].t_end

    @property
    def y_end(self) -> list[mpc]:
        s = self.steps[-1]
        return s.state(s.h)

    def nsteps(self) -> int:
        return len(self.steps)

    def state_at_param(self, i_step: int, tau) -> list[mpc]:
        return self.steps[i_step].state(tau)


def _default_order(ctx: PrecisionCtx) -> int:
    with ctx.active():
        t = min(float(ctx.atol), float(ctx.rtol))
    return max(10, int(-0.5 * math.log(t)) + 4)


def _step_size(ys, p, scales):
    """Jorba-Zou style: from the last two coefficient magnitudes."""
    hs = []
    for i, s in enumerate(ys):
        sc = scales[i]
        for k, expo in ((p - 1, p - 1), (p, p)):
            m = abs(s[k]) / sc
            if m > 0:
                hs.append(mpfr(m) ** (mpfr(-1) / expo))
    if not hs:
        return mpfr("1e9")
    return mpfr("0.85") * min(hs)


def integrate_steps(field: PolynomialField, y0, t0, tdir, length, ctx: PrecisionCtx,
                    step_callback=None, order: int | None = None,
                    max_steps: int = 100000) -> Trajectory:
    """March from t0 a distance `length` along unit direction `tdir`.

    `step_callback(traj, step) -> bool` may inspect each accepted step and
    return True to stop early (used for event location).
    """
    with ctx.active():
        p = order or _default_order(ctx)
        traj = Trajectory(ctx)
        t = mpc(t0)
        tdir = mpc(tdir)
        y = [mpc(v) for v in y0]
        remaining = mpfr(length)
        hmin = mpfr(length) * ctx.eps * 256 if length > 0 else ctx.eps
        atol, rtol = ctx.atol, ctx.rtol
        nst = 0
        while remaining > 0:
            nst += 1
            if nst > max_steps:
                raise IntegrationError(f"max step count {max_steps} exceeded")
            ys = field.taylor(y, p, tdir)
            scales = [atol + rtol * abs(s[0]) for s in ys]
            h = _step_size(ys, p, scales)
            if h < hmin:
                raise StepUnderflow(
                    f"step size underflow at t={t} (h={h}): singularity proximity or stiffness")
            if h > remaining:
                h = remaining
            step = Step(t, tdir, h, ys)
            traj.steps.append(step)
            y = step.state(h)
            t = step.t_end
            remaining -= h
            if step_callback is not None and step_callback(traj, step):
                break
        return traj


def integrate_ivp(field: PolynomialField, y0, t_span, ctx: PrecisionCtx,
                  event=None, order: int | None = None) -> Trajectory:
    """Real-interval IVP with optional event location.

    event: (component, value, direction) with direction in {-1, 0, +1};
    integration stops at the located crossing, appended to traj.events.
    If the event never brackets inside t_span an EventNotFound is raised.
    """
    with ctx.active():
        ta, tb = mpfr(t_span[0]), mpfr(t_span[1])
        tdir = mpfr(1) if tb >= ta else mpfr(-1)
        length = abs(tb - ta)
        cb = None
        if event is not None:
            comp, value, direction = event
            value = mpfr(value)

            def cb(traj, step):
                g0 = step.series[comp][0].real - value
                g1 = eval_series(step.series[comp], step.h).real - value
                if g0 == 0:
                    tau = mpfr(0)
                elif g0 * g1 > 0:
                    return False
                else:
                    if direction > 0 and not (g0 < 0 < g1):
                        return False
                    if direction < 0 and not (g0 > 0 > g1):
                        return False
                    tau = _refine_real_root(step.series[comp], value, step.h, ctx)
                traj.events.append((step.t0 + step.tdir * tau, step.state(tau)))
                return True

        traj = integrate_steps(field, y0, ta, tdir, length, ctx, step_callback=cb, order=order)
        if event is not None and not traj.events:
            raise EventNotFound(f"event component {event[0]} = {event[1]} not bracketed in {t_span}")
        return traj


def _refine_real_root(series, value, h, ctx: PrecisionCtx, bits_extra: int = 8):
    lo, hi = mpfr(0), mpfr(h)
    glo = series[0].real - value
    # bisection to quarter-width, then Newton
    for _ in range(12):
        mid = (lo + hi) / 2
        gm = eval_series(series, mid).real - value
        if gm == 0:
            return mid
        if glo * gm < 0:
            hi = mid
        else:
            lo, glo = mid, gm
    tau = (lo + hi) / 2
    tol = mpfr(h) * ctx.rtol
    for _ in range(80):
        g = eval_series(series, tau).real - value
        dg = eval_series_deriv(series, tau).real
        if dg == 0:
            break
        dt = g / dg
        tau = tau - dt
        if tau < lo or tau > hi:
            tau = (lo + hi) / 2
        if abs(dt) <= tol:
            break
    return tau


def integrate_complex_path(field: PolynomialField, y0, tpath, ctx: PrecisionCtx,
                           order: int | None = None) -> list[Trajectory]:
    """Integrate along the piecewise-linear complex time path tpath[0]->...->tpath[-1]."""
    with ctx.active():
        trajs = []
        y = [mpc(v) for v in y0]
        for a, b in zip(tpath[:-1], tpath[1:]):
            a, b = mpc(a), mpc(b)
            seg = b - a
            L = abs(seg)
            if L == 0:
                continue
            tdir = seg / L
            tr = integrate_steps(field, y, a, tdir, L, ctx, order=order)
            trajs.append(tr)
            y = tr.y_end
        return trajs


def refine_complex_event(traj: Trajectory, comp: int, value, ctx: PrecisionCtx):
    """Newton in complex tau on the last step so that y[comp](tau) = value.

    Returns (t_event, state).  Starts from the step endpoint; the caller is
    responsible for the guess being in the step's convergence basin.
    """
    with ctx.active():
        step = traj.steps[-1]
        series = step.series[comp]
        tau = mpc(step.h)
        value = mpc(value)
        tol = mpfr(step.h) * ctx.rtol
        best = None
        for _ in range(100):
            g = eval_series(series, tau) - value
            dg = eval_series_deriv(series, tau)
            if dg == 0:
                break
            dt = g / dg
            tau = tau - dt
            best = tau
            if abs(dt) <= tol:
                return step.t0 + step.tdir * tau, step.state(tau)
        if best is None:
            raise EventNotFound("complex event refinement failed")
        return step.t0 + step.tdir * best, step.state(best)
