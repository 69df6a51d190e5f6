"""Panel quadrature on complex paths, with exact oscillatory-kernel moments.

Integrals of the form  int g(w) e^{lam w} dw  over a panel are computed by
interpolating g at the panel's Gauss-Legendre nodes and integrating the
interpolant against the kernel exactly (Filon-type).  The kernel moments
m_k(mu) = int_{-1}^{1} xi^k e^{mu xi} dxi are evaluated by power series for
moderate |mu| and by the integration-by-parts recursion (with guard bits)
for large |mu|; lam = 0 reduces to plain Gauss-Legendre.

Infinite algebraic tails use either the 1/|w| substitution on a finite Gauss
rule (callable integrands) or an asymptotic power-law continuation fitted
from the last panel (sampled integrands).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from ..precision import PrecisionCtx, R, C

_GL_CACHE: dict = {}
_VAND_CACHE: dict = {}


class QuadratureError(RuntimeError):
    pass


def gauss_legendre(m: int, ctx: PrecisionCtx):
    """Nodes and weights on (-1, 1) at the context precision."""
    key = (m, ctx.mantissa_bits)
    if key in _GL_CACHE:
        return _GL_CACHE[key]
    with ctx.active():
        import math
        nodes, weights = [], []
        for i in range(1, m + 1):
            x = mpfr(math.cos(math.pi * (i - 0.25) / (m + 0.5)))
            for _ in range(200):
                p0, p1 = mpfr(1), x
                for k in range(2, m + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = m * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x = x - dx
                if abs(dx) < ctx.eps * 16:
                    break
            p0, p1 = mpfr(1), x
            for k in range(2, m + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = m * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
        _GL_CACHE[key] = (nodes, weights)
        return _GL_CACHE[key]


def _mat_inv(a, n):
    """Gauss-Jordan inverse of an n x n list-of-lists of mpfr/mpc."""
    aug = [row[:] + [mpfr(1) if i == j else mpfr(0) for j in range(n)]
           for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if abs(aug[piv][col]) == 0:
            raise QuadratureError("singular interpolation matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        d = aug[col][col]
        aug[col] = [v / d for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def vandermonde_data(m: int, ctx: PrecisionCtx):
    """(nodes, weights, Vinv, Dmat) at GL nodes; Dmat differentiates in xi."""
    key = (m, ctx.mantissa_bits)
    if key in _VAND_CACHE:
        return _VAND_CACHE[key]
    with ctx.active():
        nodes, weights = gauss_legendre(m, ctx)
        v = [[x ** k for k in range(m)] for x in nodes]
        vinv = _mat_inv(v, m)
        vd = [[(k * x ** (k - 1) if k > 0 else mpfr(0)) for k in range(m)] for x in nodes]
        dmat = [[sum(vd[i][k] * vinv[k][j] for k in range(m)) for j in range(m)]
                for i in range(m)]
        _VAND_CACHE[key] = (nodes, weights, vinv, dmat)
        return _VAND_CACHE[key]


def _moment_guard_bits(amu, m: int) -> int:
    """Guard bits for the upward IBP moment recursion (amplification ~ (m/|mu|)^m)."""
    import math
    if amu <= 0:
        return 0
    return 32 + m * max(0, math.ceil(math.log2(max(1.0, m / float(amu)))))


def kernel_moments(mu: mpc, m: int, ctx: PrecisionCtx) -> list[mpc]:
    """m_k(mu) = int_{-1}^{1} xi^k e^{mu xi} dxi for k < m."""
    with ctx.active():
        amu = abs(mu)
        if amu <= 2:
            # short power series around mu = 0
            out = []
            for k in range(m):
                tot, term, j = mpc(0), mpc(1), 0
                while True:
                    if (k + j) % 2 == 0:
                        tot += term * (mpfr(2) / (k + j + 1))
                    j += 1
                    term = term * mu / j
                    if j > 3 and abs(term) < ctx.eps * (abs(tot) + ctx.eps):
                        break
                out.append(tot)
            return out
    guard = ctx.with_bits(ctx.mantissa_bits + _moment_guard_bits(amu, m))
    with guard.active():
        mug = mpc(mu)
        ep, em = gmpy2.exp(mug), gmpy2.exp(-mug)
        out = [(ep - em) / mug]
        for k in range(1, m):
            bnd = (ep - em) if k % 2 == 0 else (ep + em)
            out.append(bnd / mug - k * out[-1] / mug)
    with ctx.active():
        return [mpc(v) for v in out]


@dataclass
class Panel:
    a: mpc
    b: mpc
    order: int
    nodes: list = field(default_factory=list)      # points in the w-plane
    _filon: dict = field(default_factory=dict)     # lam-key -> weight vector

    def setup(self, ctx: PrecisionCtx):
        with ctx.active():
            xi, _, _, _ = vandermonde_data(self.order, ctx)
            c = (self.a + self.b) / 2
            h = (self.b - self.a) / 2
            self.center, self.half = c, h
            self.nodes = [c + h * x for x in xi]

    def filon_weights(self, lam, ctx: PrecisionCtx, key=None):
        """Weights W so that int_a^b g(w) e^{lam(w - wref)} dw ~= sum W_i g(w_i),
        with the e^{lam wref} factor left to the caller (wref = panel center)."""
        k = key if key is not None else str(lam)
        w = self._filon.get(k)
        if w is None:
            with ctx.active():
                _, _, vinv, _ = vandermonde_data(self.order, ctx)
                mu = mpc(lam) * self.half
                mom = kernel_moments(mu, self.order, ctx)
                # W_i = h * sum_k Vinv[k][i] * m_k
                w = [self.half * sum(vinv[kk][i] * mom[kk] for kk in range(self.order))
                     for i in range(self.order)]
                self._filon[k] = w
        return w

    def integrate_samples(self, vals, lam, ctx: PrecisionCtx, lam_key=None) -> mpc:
        """int_a^b g(w) e^{lam w} dw given g at the panel nodes."""
        w = self.filon_weights(lam, ctx, key=lam_key)
        with ctx.active():
            s = mpc(0)
            for wi, vi in zip(w, vals):
                s += wi * vi
            if lam == 0:
                return s
            return s * gmpy2.exp(mpc(lam) * self.center)

    def deriv_samples(self, vals, ctx: PrecisionCtx) -> list[mpc]:
        """d/dw of the interpolant at the panel nodes."""
        _, _, _, dmat = vandermonde_data(self.order, ctx)
        with ctx.active():
            return [sum(dmat[i][j] * vals[j] for j in range(self.order)) / self.half
                    for i in range(self.order)]

    def interp(self, vals, w, ctx: PrecisionCtx) -> mpc:
        """Barycentric-free interpolation via the monomial coefficients."""
        _, _, vinv, _ = vandermonde_data(self.order, ctx)
        with ctx.active():
            xi = (mpc(w) - self.center) / self.half
            coef = [sum(vinv[k][j] * vals[j] for j in range(self.order))
                    for k in range(self.order)]
            acc = mpc(0)
            for c in reversed(coef):
                acc = acc * xi + c
            return acc


class PanelPath:
    """Ordered panels along a piecewise-linear path; node list is their union."""

    def __init__(self, panels: list[Panel], ctx: PrecisionCtx):
        self.ctx = ctx
        self.panels = panels
        for p in panels:
            if not p.nodes:
                p.setup(ctx)
        self.nodes = [w for p in panels for w in p.nodes]
        self.panel_of_node = [i for i, p in enumerate(panels) for _ in p.nodes]
        self.node_slices = []
        off = 0
        for p in panels:
            self.node_slices.append((off, off + p.order))
            off += p.order

    def __len__(self):
        return len(self.nodes)

    def panel_values(self, values, i_panel):
        a, b = self.node_slices[i_panel]
        return values[a:b]

    def derivative(self, values) -> list:
        out = []
        for i, p in enumerate(self.panels):
            out.extend(p.deriv_samples(self.panel_values(values, i), self.ctx))
        return out

    def interp(self, values, w) -> mpc:
        with self.ctx.active():
            w = mpc(w)
            best, bd = 0, None
            for i, p in enumerate(self.panels):
                d = abs(w - (p.a + p.b) / 2) / abs(p.b - p.a)
                if bd is None or d < bd:
                    best, bd = i, d
            return self.panels[best].interp(self.panel_values(values, best), w, self.ctx)


def panelize(a, b, ctx: PrecisionCtx, order: int = 20, focus=0,
             rel_len="0.35", min_len="0.5", max_len=None) -> list[Panel]:
    """Split [a, b] into panels whose length tracks the distance to `focus`."""
    with ctx.active():
        a, b = mpc(a), mpc(b)
        focus = mpc(focus)
        L = abs(b - a)
        direction = (b - a) / L
        rel, mn = mpfr(rel_len), mpfr(min_len)
        panels = []
        t = mpfr(0)
        while t < L:
            w = a + direction * t
            ln = max(mn, rel * abs(w - focus))
            if max_len is not None:
                ln = min(ln, mpfr(max_len))
            if t + ln > L * mpfr("0.999999"):
                ln = L - t
            panels.append(Panel(a + direction * t, a + direction * (t + ln), order))
            t += ln
        for p in panels:
            p.setup(ctx)
        return panels


def fit_power_tail(ws, vals, ctx: PrecisionCtx, nterms: int = 3):
    """Fit g(w) ~ sum_j A_j w^{-(q+j)} on the given samples.

    The base order q is estimated from the log-log slope and rounded to the
    nearest integer >= 1; returns (q, [A_j]).
    """
    with ctx.active():
        n = len(ws)
        i1, i2 = 0, n - 1
        v1, v2 = vals[i1], vals[i2]
        if abs(v1) == 0 or abs(v2) == 0:
            return 2, [mpc(0)] * nterms
        slope = float(gmpy2.log(abs(v2) / abs(v1)) / gmpy2.log(abs(ws[i2]) / abs(ws[i1])))
        q = max(1, round(-slope))
        # least squares on basis w^{-(q+j)}
        basis = [[w ** (-(q + j)) for j in range(nterms)] for w in ws]
        ata = [[sum(gmpy2.mpc(basis[r][i]).conjugate() * basis[r][j] for r in range(n))
                for j in range(nterms)] for i in range(nterms)]
        atb = [sum(gmpy2.mpc(basis[r][i]).conjugate() * vals[r] for r in range(n))
               for i in range(nterms)]
        inv = _mat_inv(ata, nterms)
        coef = [sum(inv[i][j] * atb[j] for j in range(nterms)) for i in range(nterms)]
        return q, coef


def analytic_power_tail(w_end, q: int, coefs, lam, ctx: PrecisionCtx) -> mpc:
    """int from complex infinity to w_end of sum_j A_j w^{-(q+j)} e^{lam w} dw.

    Valid whenever the antiderivative vanishes at the tail end (algebraic
    decay q > 1 for lam = 0; bounded kernel otherwise), which makes the
    result orientation-free: it is just the antiderivative at w_end.  For
    lam != 0 the integration-by-parts asymptotic series (3 terms) is used;
    the caller must ensure |lam * w_end| >> 1.
    """
    with ctx.active():
        w = mpc(w_end)
        lam = mpc(lam)
        total = mpc(0)
        if lam == 0:
            for j, A in enumerate(coefs):
                p = q + j
                if p <= 1:
                    raise QuadratureError("tail divergence: decay order <= 1 with tail present")
                total += A * w ** (1 - p) / (1 - p)
            return total
        # asymptotic IBP series; truncate at the smallest term (cap |lam w|)
        cap = max(6, min(48, int(abs(lam * w)) - 1))
        for j, A in enumerate(coefs):
            p = q + j
            s = mpc(0)
            fac = mpc(1)
            prev = None
            for i in range(cap):
                term = fac * w ** (-p - i) / lam ** (i + 1)
                if prev is not None and abs(term) >= prev:
                    break
                s += term
                prev = abs(term)
                fac = fac * (p + i)
            total += A * gmpy2.exp(lam * w) * s
        return total


def power_tail_integral(w_end, tail_dir, q: int, coefs, lam, ctx: PrecisionCtx) -> mpc:
    """int from complex infinity (along tail_dir from w_end) to w_end of the
    fitted power law times e^{lam w}.

    Uses the closed-form / asymptotic route when safe and falls back to
    numerical quadrature of the fitted asymptote when |lam w_end| is too
    small for the integration-by-parts series (decaying kernels only).
    """
    with ctx.active():
        lam = mpc(lam)
        if lam == 0 or abs(lam * mpc(w_end)) >= 30:
            return analytic_power_tail(w_end, q, coefs, lam, ctx)
        d = mpc(tail_dir)
        d = d / abs(d)
        beta = -(lam * d).real
        if beta <= 0 or abs((lam * d).imag) > 8 * beta:
            # kernel not decaying (or too oscillatory) along the tail:
            # keep the asymptotic series
            return analytic_power_tail(w_end, q, coefs, lam, ctx)
        # w = w_end + d u / beta, u in (0, inf): kernel e^{lam w} = e^{lam w_end}
        # times e^{-u} e^{i u Im(lam d)/beta}; composite Gauss on geometric panels
        w0 = mpc(w_end)
        prec_digits = ctx.mantissa_bits * mpfr("0.302")
        u_max = (prec_digits + 10) * gmpy2.log(mpfr(10))
        xi, wg, _, _ = vandermonde_data(24, ctx)
        total = mpc(0)
        lo = mpfr(0)
        hi = mpfr(1)
        rate = lam * d / beta
        while lo < u_max:
            c, h = (lo + hi) / 2, (hi - lo) / 2
            for x, wgt in zip(xi, wg):
                u = c + h * x
                w = w0 + d * u / beta
                acc = mpc(0)
                for j, A in enumerate(coefs):
                    acc += A * w ** (-(q + j))
                total += wgt * h * acc * gmpy2.exp(rate * u)
            lo, hi = hi, min(hi * 2, u_max) if hi * 2 > hi + 1 else hi + 1
        return -total * gmpy2.exp(lam * w0) * d / beta


def quadrature_path(f, waypoints, ctx: PrecisionCtx, decay_order=None,
                    tail_dir=None, order: int = 24) -> mpc:
    """Adaptive quadrature of callable f along a piecewise-linear path.

    With `tail_dir` (unit complex) the path conceptually starts at complex
    infinity along -tail_dir before waypoints[0]; the tail contribution is
    computed with the substitution t = 1/|w| on a finite Gauss rule and
    requires decay_order > 1.
    """
    with ctx.active():
        total = mpc(0)
        if tail_dir is not None:
            if decay_order is None or mpfr(decay_order) <= 1:
                raise QuadratureError("tail divergence: decay order <= 1 with tail present")
            w0 = mpc(waypoints[0])
            d = mpc(tail_dir) / abs(mpc(tail_dir))
            scale = max(abs(w0), mpfr(1))

            def tf(t):
                tau = scale * (1 / t - 1)
                w = w0 + d * tau
                return f(w) * (-d) * (scale / t ** 2)

            total += _adaptive_gl(tf, mpfr(0), mpfr(1), ctx, order, singular_left=True)
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            a, b = mpc(a), mpc(b)
            if a == b:
                continue
            total += _adaptive_gl_line(f, a, b, ctx, order)
        return total


def _gl_line(f, a, b, ctx, order):
    xi, wgt, _, _ = vandermonde_data(order, ctx)
    c, h = (a + b) / 2, (b - a) / 2
    s = mpc(0)
    for x, w in zip(xi, wgt):
        s += w * f(c + h * x)
    return s * h


def _adaptive_gl_line(f, a, b, ctx, order, depth=0):
    with ctx.active():
        whole = _gl_line(f, a, b, ctx, order)
        mid = (a + b) / 2
        left = _gl_line(f, a, mid, ctx, order)
        right = _gl_line(f, mid, b, ctx, order)
        err = abs(whole - (left + right))
        scale = abs(left) + abs(right) + ctx.atol
        if err <= ctx.rtol * scale or depth >= 14:
            if depth >= 14 and err > 64 * ctx.rtol * scale:
                raise QuadratureError(f"quadrature failed to converge on [{a}, {b}]")
            return left + right
        return (_adaptive_gl_line(f, a, mid, ctx, order, depth + 1)
                + _adaptive_gl_line(f, mid, b, ctx, order, depth + 1))


def _adaptive_gl(f, a, b, ctx, order, depth=0, singular_left=False):
    """Real-interval adaptive GL for the tail substitution (integrand analytic
    in (a, b], possibly vanishing at a)."""
    with ctx.active():
        fa, fb = mpfr(a), mpfr(b)
        whole = _gl_line(f, mpc(fa), mpc(fb), ctx, order)
        mid = (fa + fb) / 2
        left = _gl_line(f, mpc(fa), mpc(mid), ctx, order)
        right = _gl_line(f, mpc(mid), mpc(fb), ctx, order)
        err = abs(whole - (left + right))
        scale = abs(left) + abs(right) + ctx.atol
        if err <= ctx.rtol * scale or depth >= 16:
            return left + right
        return (_adaptive_gl(f, fa, mid, ctx, order, depth + 1, singular_left)
                + _adaptive_gl(f, mid, fb, ctx, order, depth + 1))
