"""Inner equation: distinguished solutions psi_in^{u,s} via right inverses.

The unknown is represented by Fourier coefficients in theta sampled at the
Gauss-Legendre nodes of a panelized path in the complex s plane.  The path
for the unstable branch runs from Re s = -R_max along a horizontal line in
the lower half plane to a corner on the negative imaginary axis and then
descends a ray (vertical by default); the stable branch mirrors the tail to
Re s = +R_max and shares the ray nodes, which is where the difference
psi^u - psi^s is later formed.

The right inverse G acts mode by mode,

    G^[l](phi)(s) = d^-1 s^(2/d) int_{-+inf}^{s} e^{-(il alpha/d)(w-s)} w^(-2/d) phi^[l](w) dw,

and is evaluated by cumulative Filon panels: the non-kernel factor is
interpolated at the panel nodes and integrated against e^{lam w} exactly, so
horizontal-tail oscillation costs nothing.  Beyond R_max an asymptotic
power-law continuation (fitted on the outermost panel) supplies the tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .model import FGHEval, InnerNonlinearity, UnfoldingSpec, BranchTrackingError
from .numerics.quadrature import (Panel, PanelPath, panelize, vandermonde_data,
                                  kernel_moments, fit_power_tail, analytic_power_tail,
                                  power_tail_integral)
from .precision import PrecisionCtx, C, R

UNSTABLE, STABLE = "unstable", "stable"


class InnerSolverError(RuntimeError):
    pass


class ContractionError(InnerSolverError):
    def __init__(self, msg, suggested_rho=None, ratio=None):
        super().__init__(msg)
        self.suggested_rho = suggested_rho
        self.ratio = ratio


class ModeWindowOverflow(InnerSolverError):
    pass


@dataclass
class InnerDomainSpec:
    beta0: float | str = 0.5
    rho_in: float | str = 4.0
    branch: str = UNSTABLE

    def __post_init__(self):
        if self.branch not in (UNSTABLE, STABLE):
            raise ValueError("branch must be 'unstable' or 'stable'")

    def contains(self, s, ctx: PrecisionCtx) -> bool:
        with ctx.active():
            s = mpc(s)
            t = gmpy2.tan(R(self.beta0))
            re = s.real if self.branch == UNSTABLE else -s.real
            return abs(s.imag) >= t * re + R(self.rho_in)


class ThetaGrid:
    """Uniform theta grid with exact DFT tables at the context precision."""

    _cache: dict = {}

    def __new__(cls, n_modes: int, n_grid: int, ctx: PrecisionCtx):
        key = (n_modes, n_grid, ctx.mantissa_bits)
        if key in cls._cache:
            return cls._cache[key]
        self = super().__new__(cls)
        with ctx.active():
            self.n_modes = n_modes
            self.n_grid = n_grid
            self.ctx = ctx
            two_pi = 2 * gmpy2.const_pi()
            self.theta = [two_pi * k / n_grid for k in range(n_grid)]
            w = gmpy2.exp(mpc(0, 1) * two_pi / n_grid)
            self.roots = [mpc(1)]
            for _ in range(n_grid - 1):
                self.roots.append(self.roots[-1] * w)
            self.cos = [gmpy2.cos(t) for t in self.theta]
            self.sin = [gmpy2.sin(t) for t in self.theta]
        cls._cache[key] = self
        return self

    def synth(self, modes_at_node) -> list[mpc]:
        """values on the grid from mode coefficients (index l + n_modes)."""
        n, ng = self.n_modes, self.n_grid
        rt = self.roots
        out = []
        for k in range(ng):
            acc = mpc(0)
            for li in range(2 * n + 1):
                l = li - n
                acc += modes_at_node[li] * rt[(l * k) % ng]
            out.append(acc)
        return out

    def analyze_full(self, values) -> list[mpc]:
        """all n_grid Fourier coefficients (index l mod n_grid)."""
        ng = self.n_grid
        rt = self.roots
        out = []
        for l in range(ng):
            acc = mpc(0)
            for k in range(ng):
                acc += values[k] * rt[(-l * k) % ng]
            out.append(acc / ng)
        return out

    def analyze(self, values, overflow_tol=None) -> list[mpc]:
        """coefficients for l in [-n_modes, n_modes]; optionally check that the
        energy in the discarded band stays below overflow_tol * total."""
        full = self.analyze_full(values)
        n, ng = self.n_modes, self.n_grid
        out = [full[l % ng] for l in range(-n, n + 1)]
        if overflow_tol is not None:
            kept = sum(abs(v) for v in out)
            disc = sum(abs(full[l]) for l in range(n + 1, ng - n))
            if disc > mpfr(overflow_tol) * (kept + mpfr("1e-300")):
                raise ModeWindowOverflow(
                    f"discarded mode energy {disc} vs kept {kept}")
        return out

    def spill_fraction(self, values) -> mpfr:
        full = self.analyze_full(values)
        n, ng = self.n_modes, self.n_grid
        kept = sum(abs(full[l % ng]) for l in range(-n, n + 1))
        disc = sum(abs(full[l]) for l in range(n + 1, ng - n))
        return disc / (kept + mpfr("1e-300"))


class FourierOnPath:
    """2pi-periodic function of theta sampled along a panelized s path."""

    def __init__(self, path: PanelPath, n_modes: int, strip, ctx: PrecisionCtx,
                 data=None, real_symmetric: bool = False):
        self.path = path
        self.n_modes = n_modes
        self.strip = R(strip)
        self.ctx = ctx
        nn = len(path.nodes)
        if data is None:
            with ctx.active():
                data = [[mpc(0)] * nn for _ in range(2 * n_modes + 1)]
        self.data = data
        self.real_symmetric = real_symmetric

    def copy(self) -> "FourierOnPath":
        return FourierOnPath(self.path, self.n_modes, self.strip, self.ctx,
                             [row[:] for row in self.data], self.real_symmetric)

    def mode(self, l: int) -> list[mpc]:
        return self.data[l + self.n_modes]

    def zero_like(self) -> "FourierOnPath":
        return FourierOnPath(self.path, self.n_modes, self.strip, self.ctx)

    def axpy(self, a, other: "FourierOnPath") -> "FourierOnPath":
        with self.ctx.active():
            a = mpc(a)
            out = self.copy()
            for li in range(2 * self.n_modes + 1):
                row, orow = out.data[li], other.data[li]
                for i in range(len(row)):
                    row[i] += a * orow[i]
            return out

    def s_derivative(self) -> "FourierOnPath":
        out = self.zero_like()
        for li in range(2 * self.n_modes + 1):
            out.data[li] = self.path.derivative(self.data[li])
        return out

    def modes_at_node(self, i: int) -> list[mpc]:
        return [self.data[li][i] for li in range(2 * self.n_modes + 1)]

    def value(self, i: int, theta) -> mpc:
        with self.ctx.active():
            e = gmpy2.exp(mpc(0, 1) * mpc(theta))
            acc = mpc(0)
            p = e ** (-self.n_modes)
            for li in range(2 * self.n_modes + 1):
                acc += self.data[li][i] * p
                p *= e
            return acc

    def weighted_norm(self, n: int) -> mpfr:
        """sum_l e^{|l| strip} sup_nodes |s^n psi^[l](s)| (diagnostic norm)."""
        with self.ctx.active():
            tot = mpfr(0)
            nodes = self.path.nodes
            for li in range(2 * self.n_modes + 1):
                l = li - self.n_modes
                m = mpfr(0)
                row = self.data[li]
                for i, s in enumerate(nodes):
                    v = abs(s) ** n * abs(row[i])
                    if v > m:
                        m = v
                tot += m * gmpy2.exp(abs(l) * self.strip)
            return tot

    def node_norms(self) -> list[mpfr]:
        """sum_l |psi^[l](s_i)| e^{|l| strip} per node (theta-sup proxy)."""
        with self.ctx.active():
            nn = len(self.path.nodes)
            out = []
            for i in range(nn):
                acc = mpfr(0)
                for li in range(2 * self.n_modes + 1):
                    l = li - self.n_modes
                    acc += abs(self.data[li][i]) * gmpy2.exp(abs(l) * self.strip)
                out.append(acc)
            return out

    # --- columnar serialization -------------------------------------------
    def dump(self, fh):
        from .precision import num_str
        fh.write("# stokes-splitting-lab v1\n")
        fh.write(f"# fourier-on-path n_modes={self.n_modes} strip={num_str(self.strip)} "
                 f"bits={self.ctx.mantissa_bits} real_symmetric={int(self.real_symmetric)}\n")
        fh.write("# panels: a_re a_im b_re b_im order\n")
        for p in self.path.panels:
            fh.write(f"P {num_str(p.a.real)} {num_str(p.a.imag)} "
                     f"{num_str(p.b.real)} {num_str(p.b.imag)} {p.order}\n")
        fh.write("# rows: s_re s_im then Re/Im per mode l=-n..n\n")
        for i, s in enumerate(self.path.nodes):
            cells = [num_str(s.real), num_str(s.imag)]
            for li in range(2 * self.n_modes + 1):
                v = self.data[li][i]
                cells.append(num_str(v.real))
                cells.append(num_str(v.imag))
            fh.write(" ".join(cells) + "\n")

    @classmethod
    def load(cls, fh, ctx: PrecisionCtx) -> "FourierOnPath":
        header = fh.readline()
        if "stokes-splitting-lab" not in header:
            raise ValueError("not a stokeslab cache file")
        meta = fh.readline().split()
        n_modes = int(meta[2].split("=")[1])
        strip = meta[3].split("=")[1]
        real_sym = bool(int(meta[5].split("=")[1]))
        fh.readline()
        panels = []
        rows = []
        with ctx.active():
            for line in fh:
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if parts[0] == "P":
                    panels.append(Panel(mpc(mpfr(parts[1]), mpfr(parts[2])),
                                        mpc(mpfr(parts[3]), mpfr(parts[4])), int(parts[5])))
                else:
                    rows.append([mpfr(x) for x in parts])
            path = PanelPath(panels, ctx)
            out = cls(path, n_modes, mpfr(strip), ctx, real_symmetric=real_sym)
            for i, row in enumerate(rows):
                for li in range(2 * n_modes + 1):
                    out.data[li][i] = mpc(row[2 + 2 * li], row[3 + 2 * li])
        return out


def diff_norm(a: FourierOnPath, b: FourierOnPath, weight_power: int = 3) -> mpfr:
    with a.ctx.active():
        tot = mpfr(0)
        nodes = a.path.nodes
        for li in range(2 * a.n_modes + 1):
            l = li - a.n_modes
            m = mpfr(0)
            ra, rb = a.data[li], b.data[li]
            for i, s in enumerate(nodes):
                v = abs(s) ** weight_power * abs(ra[i] - rb[i])
                if v > m:
                    m = v
            tot += m * gmpy2.exp(abs(l) * a.strip)
        return tot


# --------------------------------------------------------------------------
# operators
# --------------------------------------------------------------------------

def apply_L(psi: FourierOnPath, alpha, d) -> FourierOnPath:
    """L psi = -alpha d_theta psi + d d_s psi - 2 psi / s, mode by mode."""
    ctx = psi.ctx
    with ctx.active():
        alpha, d = R(alpha), R(d)
        nodes = psi.path.nodes
        for s in nodes:
            if s == 0:
                raise ValueError("path contains s = 0")
        dpsi = psi.s_derivative()
        out = psi.zero_like()
        for li in range(2 * psi.n_modes + 1):
            l = li - psi.n_modes
            il_alpha = mpc(0, 1) * l * alpha
            row, drow, orow = psi.data[li], dpsi.data[li], out.data[li]
            for i, s in enumerate(nodes):
                orow[i] = -il_alpha * row[i] + d * drow[i] - 2 * row[i] / s
        return out


def apply_M(psi: FourierOnPath, delta, sigma, fgh: FGHEval, spec: UnfoldingSpec,
            grid: ThetaGrid, overflow_tol="1e-6") -> FourierOnPath:
    """Right-hand side operator of the psi equation (inner equation at delta=0)."""
    ctx = psi.ctx
    with ctx.active():
        delta, sigma = R(delta), R(sigma)
        if delta == 0 and sigma != 0:
            raise ValueError("delta = 0 requires sigma = 0")
        d, b, c = spec.d, spec.b, spec.c
        nodes = psi.path.nodes
        dpsi = psi.s_derivative()
        out = psi.zero_like()
        n = psi.n_modes
        co, si = grid.cos, grid.sin
        ng = grid.n_grid
        d1b = (d + 1) / b
        for i, s in enumerate(nodes):
            pm = psi.modes_at_node(i)
            dm = dpsi.modes_at_node(i)
            tm = [mpc(0, 1) * (li - n) * pm[li] for li in range(2 * n + 1)]
            pv = grid.synth(pm)
            dv = grid.synth(dm)
            tv = grid.synth(tm)
            inv_s = 1 / s
            s2 = s * s
            mvals = []
            for k in range(ng):
                fhat, ghat, hhat = fgh.fgh_point(pv[k], s, co[k], si[k])
                m = (c * inv_s * tv[k] + fhat + d1b * inv_s * hhat
                     - ghat * tv[k] + s2 * (2 * b * pv[k] + hhat) * dv[k])
                if delta != 0:
                    m += d * delta ** 2 * s2 * dv[k]
                    if sigma != 0:
                        m += sigma * fgh.rho(pv[k], s) ** 2
                mvals.append(m)
            out_modes = grid.analyze(mvals, overflow_tol=overflow_tol)
            for li in range(2 * n + 1):
                out.data[li][i] = out_modes[li]
        return out


# --------------------------------------------------------------------------
# right inverse G^{u,s}
# --------------------------------------------------------------------------

@dataclass
class BranchPath:
    """Panelized solver path for one branch plus shared-ray bookkeeping."""

    branch: str
    path: PanelPath
    ray_start_index: int        # node index where the shared ray begins
    tail_sign: int              # -1: tail at Re -> -inf (unstable), +1: stable
    rho_in: mpfr
    y0: mpfr
    ray_dir: mpc                # unit vector of descending ray

    @property
    def ray_nodes(self):
        return self.path.nodes[self.ray_start_index:]


def build_branch_path(branch: str, rho_in, ctx: PrecisionCtx, r_max_factor=400,
                      y_deep_factor=10, order_tail=16, order_ray=16,
                      rel_len="0.3", ray_angle_deg=0, margin_factor="0.08") -> BranchPath:
    """Horizontal tail at Im s = -(rho_in + margin) joined to a descending ray.

    ray_angle_deg tilts the ray off the vertical (positive tilts toward the
    branch's tail side); the ray is shared between branches when the same
    angle is used.
    """
    with ctx.active():
        rho = R(rho_in)
        y0 = rho * (1 + mpfr(margin_factor))
        rmax = rho * R(r_max_factor)
        ydeep = rho * R(y_deep_factor)
        sign = -1 if branch == UNSTABLE else +1
        corner = mpc(0, -y0)
        tail_start = mpc(sign * rmax, -y0)
        ang = R(ray_angle_deg) * gmpy2.const_pi() / 180
        ray_dir = mpc(-gmpy2.sin(ang), -gmpy2.cos(ang))
        ray_end = corner + ray_dir * (ydeep - y0)
        min_len = rho / 3
        tail_panels = panelize(tail_start, corner, ctx, order=order_tail,
                               focus=0, rel_len=rel_len, min_len=min_len)
        ray_panels = panelize(corner, ray_end, ctx, order=order_ray,
                              focus=0, rel_len=mpfr(rel_len) / 2, min_len=min_len)
        panels = tail_panels + ray_panels
        path = PanelPath(panels, ctx)
        ray_start = sum(p.order for p in tail_panels)
        return BranchPath(branch, path, ray_start, sign, rho, y0, ray_dir)


class RightInverseG:
    """Cumulative evaluation of G^{u,s} along a BranchPath for all modes."""

    def __init__(self, bpath: BranchPath, alpha, d, n_modes: int, ctx: PrecisionCtx):
        self.bpath = bpath
        self.ctx = ctx
        with ctx.active():
            self.alpha, self.d = R(alpha), R(d)
            self.n_modes = n_modes
            self.two_over_d = 2 / self.d
            # lam_l = -i l alpha / d  (kernel e^{lam (w - s)})
            self.lams = {l: mpc(0, -1) * l * self.alpha / self.d
                         for l in range(-n_modes, n_modes + 1)}
            self._partial: dict = {}

    def _partial_weights(self, panel: Panel, l: int):
        """W[i][j]: int_a^{node_i} of (interpolant e^{lam(w - c)}) from samples."""
        ctx = self.ctx
        with ctx.active():
            mu = self.lams[l] * panel.half
            key = (str(mu), str(panel.half), panel.order, ctx.mantissa_bits)
            w = _PWEIGHT_CACHE.get(key)
            if w is not None:
                return w
            m = panel.order
            xi, _, vinv, _ = vandermonde_data(m, ctx)
            pm = _partial_moments(mu, xi, m, ctx)
            w = [[panel.half * sum(vinv[k][j] * pm[i][k] for k in range(m))
                  for j in range(m)] for i in range(m)]
            _PWEIGHT_CACHE[key] = w
            return w

    def apply(self, phi: FourierOnPath) -> FourierOnPath:
        """G(phi) on the same path.

        Modes l <= 0 accumulate the integral forward from the branch tail
        (analytic power-law continuation beyond R_max).  For modes l > 0 the
        forward sweep is kept on the tail segment but the descending-ray
        values are anchored at the ray bottom: there the kernel suppresses
        the integral by e^{-l alpha (Y - y0)/d}, so the forward cumulative
        would cancel catastrophically, while the bottom value itself is
        available from the same power-law continuation of the integrand.
        """
        ctx = self.ctx
        bp = self.bpath
        with ctx.active():
            out = phi.zero_like()
            nodes = phi.path.nodes
            panels = phi.path.panels
            slices = phi.path.node_slices
            n_tail_panels = sum(1 for i, _ in enumerate(panels)
                                if slices[i][0] < bp.ray_start_index)
            two_d = self.two_over_d
            wpow = [w ** (-two_d) for w in nodes]
            spow = [w ** two_d for w in nodes]
            for li in range(2 * phi.n_modes + 1):
                l = li - phi.n_modes
                lam = self.lams[l]
                gvals = [wpow[i] * phi.data[li][i] for i in range(len(nodes))]
                orow = out.data[li]
                # analytic continuation of the integral onto the infinite tail
                a0, b0 = slices[0]
                q, coefs = fit_power_tail(nodes[a0:b0], gvals[a0:b0], ctx)
                acc = analytic_power_tail(panels[0].a, q, coefs, lam, ctx)
                forward_until = len(panels) if l <= 0 else n_tail_panels
                idx = 0
                for ip in range(forward_until):
                    panel = panels[ip]
                    a, b = slices[ip]
                    vals = gvals[a:b]
                    wpart = self._partial_weights(panel, l)
                    for i_loc in range(panel.order):
                        dot = mpc(0)
                        wrow = wpart[i_loc]
                        for j in range(panel.order):
                            dot += wrow[j] * vals[j]
                        s_node = nodes[idx]
                        if lam != 0:
                            orow[idx] = spow[idx] / self.d * (
                                gmpy2.exp(-lam * s_node) * acc
                                + gmpy2.exp(-lam * (s_node - panel.center)) * dot)
                        else:
                            orow[idx] = spow[idx] / self.d * (acc + dot)
                        idx += 1
                    acc = acc + panel.integrate_samples(vals, lam, ctx, lam_key=l)
                if l <= 0:
                    continue
                # l > 0: anchor the ray at its bottom via the power-law tail
                last = panels[-1]
                al, bl = slices[-1]
                j_bot = _bottom_anchor(nodes[al:bl], gvals[al:bl], gvals,
                                       last.b, bp.ray_dir, lam, ctx)
                # sweep the ray panels in reverse: B(s) = int_s^{bottom}
                accb = mpc(0)
                for ip in range(len(panels) - 1, n_tail_panels - 1, -1):
                    panel = panels[ip]
                    a, b = slices[ip]
                    vals = gvals[a:b]
                    wpart = self._partial_weights(panel, l)
                    full = panel.integrate_samples(vals, lam, ctx, lam_key=l)
                    for i_loc in range(panel.order - 1, -1, -1):
                        dot = mpc(0)
                        wrow = wpart[i_loc]
                        for j in range(panel.order):
                            dot += wrow[j] * vals[j]
                        s_node = nodes[a + i_loc]
                        # J(s) = j_bot - B(s); B(s) = (full - partial(s)) + accb
                        part_up = full - (gmpy2.exp(lam * panel.center) * dot
                                          if lam != 0 else dot)
                        j_s = j_bot - (part_up + accb)
                        if lam != 0:
                            orow[a + i_loc] = spow[a + i_loc] / self.d * gmpy2.exp(-lam * s_node) * j_s
                        else:
                            orow[a + i_loc] = spow[a + i_loc] / self.d * j_s
                    accb = accb + full
            return out


_PMOM_CACHE: dict = {}
_PWEIGHT_CACHE: dict = {}


def _bottom_anchor(ws, vals, all_vals, w_end, tail_dir, lam, ctx: PrecisionCtx) -> mpc:
    """Tail integral anchoring a mode at the ray bottom; zero when the bottom
    data sits at the noise floor (a power fit on noise is meaningless and the
    true anchor is below it anyway)."""
    with ctx.active():
        scale = max((abs(v) for v in all_vals), default=mpfr(0))
        bottom = max((abs(v) for v in vals), default=mpfr(0))
        if scale == 0 or bottom <= scale * mpfr("1e-30"):
            return mpc(0)
        q, coefs = fit_power_tail(ws, vals, ctx)
        if q <= 1:
            return mpc(0)
        return power_tail_integral(w_end, tail_dir, q, coefs, lam, ctx)


def _partial_moments(mu: mpc, xi, m: int, ctx: PrecisionCtx):
    """pm[i][k] = int_{-1}^{xi_i} u^k e^{mu u} du."""
    key = (str(mu), m, ctx.mantissa_bits)
    if key in _PMOM_CACHE:
        return _PMOM_CACHE[key]
    with ctx.active():
        amu = abs(mu)
        out = []
        if amu <= 2:
            for x in xi:
                row = []
                for k in range(m):
                    tot, term, j = mpc(0), mpc(1), 0
                    while True:
                        e = k + j + 1
                        seg = (x ** e - (-1) ** e) / e
                        tot += term * seg
                        j += 1
                        term = term * mu / j
                        if j > 3 and abs(term) * 2 < ctx.eps * (abs(tot) + ctx.eps):
                            break
                    row.append(tot)
                out.append(row)
        else:
            from .numerics.quadrature import _moment_guard_bits
            guard = ctx.with_bits(ctx.mantissa_bits + _moment_guard_bits(amu, m))
            with guard.active():
                mug = mpc(mu)
                em1 = gmpy2.exp(-mug)
                for x in xi:
                    ex = gmpy2.exp(mug * mpc(x))
                    xk = mpc(1)
                    row = [(ex - em1) / mug]
                    for k in range(1, m):
                        xk = xk * x
                        bnd = xk * ex - ((-1) ** k) * em1
                        row.append(bnd / mug - k * row[-1] / mug)
                    out.append(row)
            with ctx.active():
                out = [[mpc(v) for v in row] for row in out]
        _PMOM_CACHE[key] = out
        return out


# --------------------------------------------------------------------------
# fixed point
# --------------------------------------------------------------------------

@dataclass
class InnerSolveResult:
    psi: FourierOnPath
    first_iterate: FourierOnPath       # G(M(0,0))
    corrections: list                  # weighted norms of successive corrections
    ratios: list
    branch: str
    bpath: BranchPath
    residual: mpfr | None = None
    decay_slope: mpfr | None = None
    remainder_slope: mpfr | None = None
    mode_spill: mpfr | None = None


def solve_inner(branch: str, spec: UnfoldingSpec, domain: InnerDomainSpec,
                n_theta: int, ctx: PrecisionCtx, tol=None, max_iter: int = 60,
                grid_size: int | None = None, bpath: BranchPath | None = None,
                r_max_factor=400, y_deep_factor=10, ray_angle_deg=0,
                panel_order=16, strip="0.4") -> InnerSolveResult:
    """Iterate psi <- G^branch(M(psi, 0)) from psi = 0 until contraction."""
    with ctx.active():
        alpha = spec.alpha_of(0, 0)
        if bpath is None:
            bpath = build_branch_path(branch, domain.rho_in, ctx,
                                      r_max_factor=r_max_factor,
                                      y_deep_factor=y_deep_factor,
                                      order_tail=panel_order, order_ray=panel_order,
                                      ray_angle_deg=ray_angle_deg)
        n_grid = grid_size or max(4 * n_theta, 16)
        grid = ThetaGrid(n_theta, n_grid, ctx)
        fgh = InnerNonlinearity(spec, ctx).at(0, 0)
        ginv = RightInverseG(bpath, alpha, spec.d, n_theta, ctx)
        tol = mpfr(tol) if tol is not None else ctx.rtol * 100
        psi = FourierOnPath(bpath.path, n_theta, strip, ctx)
        first = ginv.apply(apply_M(psi, 0, 0, fgh, spec, grid, overflow_tol=None))
        corrections = [diff_norm(first, psi)]
        psi = first
        ratios = []
        for it in range(max_iter):
            new = ginv.apply(apply_M(psi, 0, 0, fgh, spec, grid, overflow_tol=None))
            corr = diff_norm(new, psi)
            corrections.append(corr)
            ratio = corr / corrections[-2] if corrections[-2] > 0 else mpfr(0)
            ratios.append(ratio)
            psi = new
            if it >= 1 and ratio >= 1:
                raise ContractionError(
                    f"no contraction on branch {branch}: correction ratio {float(ratio):.3f} >= 1 "
                    f"at rho_in = {float(domain.rho_in)}; enlarge rho_in",
                    ratio=ratio)
            if corr <= tol:
                break
        else:
            raise InnerSolverError(f"fixed point did not reach tol {tol} in {max_iter} iterations")
        # mode-window health of the converged solution, measured at the node
        # with the worst spill of M(psi); the deepest ray nodes are excluded
        # (their l > 0 modes are anchoring-limited by construction)
        spill = mpfr(0)
        nodes = bpath.path.nodes
        n_probe_max = bpath.ray_start_index + int(0.7 * (len(nodes) - bpath.ray_start_index))
        probe = range(0, n_probe_max, max(1, n_probe_max // 24))
        dpsi = psi.s_derivative()
        for i in probe:
            pm = psi.modes_at_node(i)
            pv = grid.synth(pm)
            dv = grid.synth(dpsi.modes_at_node(i))
            tv = grid.synth([mpc(0, 1) * (li - n_theta) * pm[li] for li in range(2 * n_theta + 1)])
            s = nodes[i]
            vals = []
            for k in range(grid.n_grid):
                fhat, ghat, hhat = fgh.fgh_point(pv[k], s, grid.cos[k], grid.sin[k])
                vals.append(spec.c / s * tv[k] + fhat + (spec.d + 1) / spec.b / s * hhat
                            - ghat * tv[k] + s * s * (2 * spec.b * pv[k] + hhat) * dv[k])
            spill = max(spill, grid.spill_fraction(vals))
        return InnerSolveResult(psi, first, corrections, ratios, branch, bpath,
                                mode_spill=spill)


@dataclass
class InnerSolutionPair:
    psi_u: InnerSolveResult
    psi_s: InnerSolveResult
    spec: UnfoldingSpec
    domain_u: InnerDomainSpec
    domain_s: InnerDomainSpec
    n_theta: int
    ctx: PrecisionCtx
