"""Difference of the inner solutions and the Stokes data extracted from it.

Everything happens on the shared descending ray (inside E_in, the overlap of
both inner domains intersected with the lower half plane): the difference
Delta psi = psi^u - psi^s, the mean-value coefficients a_1, a_2, a_3 of its
linear PDE, the constant L_0 = a_0/d with a_0 = lim s a_2^[0](s), the phase
and amplitude corrections phi and P_1 solved by their own right inverse, and
finally the Fourier coefficients Upsilon^[l] (l < 0) of the one-sided
periodic factor, whose l = -1 entry carries the Stokes constant

    C* = 2 (-i)^(2/d) Upsilon^[-1] e^{-(c + alpha L0) pi/(2d) + i alpha L+}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpc, mpfr

from .inner import (FourierOnPath, InnerSolveResult, ThetaGrid, apply_L, diff_norm,
                    _partial_moments, InnerSolverError)
from .model import FGHEval, InnerNonlinearity, UnfoldingSpec
from .numerics.quadrature import (PanelPath, gauss_legendre, fit_power_tail,
                                  analytic_power_tail, power_tail_integral,
                                  vandermonde_data)
from .numerics.extrapolation import extrapolate_limit, fit_log_slope
from .precision import PrecisionCtx, C, R


class StokesError(RuntimeError):
    pass


def restrict_to_ray(res: InnerSolveResult) -> FourierOnPath:
    """View of an inner solution on its descending-ray subpath."""
    ctx = res.psi.ctx
    bp = res.bpath
    n_tail = sum(1 for i, sl in enumerate(res.psi.path.node_slices)
                 if sl[0] < bp.ray_start_index)
    ray_panels = res.psi.path.panels[n_tail:]
    sub = PanelPath(ray_panels, ctx)
    out = FourierOnPath(sub, res.psi.n_modes, res.psi.strip, ctx)
    a = bp.ray_start_index
    for li in range(2 * res.psi.n_modes + 1):
        out.data[li] = res.psi.data[li][a:]
    return out


@dataclass
class DifferenceField:
    delta_psi: FourierOnPath
    a1: FourierOnPath
    a2: FourierOnPath
    a3: FourierOnPath
    a2_bar: FourierOnPath | None = None      # set once L0 is known
    pde_residual: mpfr | None = None
    psi_u_ray: FourierOnPath | None = None
    psi_s_ray: FourierOnPath | None = None


def difference_and_coefficients(res_u: InnerSolveResult, res_s: InnerSolveResult,
                                spec: UnfoldingSpec, ctx: PrecisionCtx,
                                n_lambda: int = 8) -> DifferenceField:
    """Delta psi on the shared ray plus a_1, a_2, a_3 by Gauss quadrature in
    the mean-value parameter lambda in [-1, 1]."""
    with ctx.active():
        pu, ps = restrict_to_ray(res_u), restrict_to_ray(res_s)
        if len(pu.path.nodes) != len(ps.path.nodes):
            raise StokesError("branch paths do not share the ray discretization")
        for a, b in zip(pu.path.nodes, ps.path.nodes):
            if a != b:
                raise StokesError("ray nodes differ between branches")
        n = pu.n_modes
        grid = ThetaGrid(n, max(4 * n, 16), ctx)
        fgh = InnerNonlinearity(spec, ctx).at(0, 0)
        dpsi = pu.copy()
        for li in range(2 * n + 1):
            row, rs = dpsi.data[li], ps.data[li]
            for i in range(len(row)):
                row[i] -= rs[i]
        du = pu.s_derivative()
        ds = ps.s_derivative()
        lam_nodes, lam_w = gauss_legendre(n_lambda, ctx)
        d, b, c = spec.d, spec.b, spec.c
        a1 = pu.zero_like()
        a2 = pu.zero_like()
        a3 = pu.zero_like()
        nodes = pu.path.nodes
        ng = grid.n_grid
        for i, s in enumerate(nodes):
            um = pu.modes_at_node(i)
            sm = ps.modes_at_node(i)
            uv, sv = grid.synth(um), grid.synth(sm)
            duv = grid.synth(du.modes_at_node(i))
            dsv = grid.synth(ds.modes_at_node(i))
            tu = grid.synth([mpc(0, 1) * (li - n) * um[li] for li in range(2 * n + 1)])
            ts = grid.synth([mpc(0, 1) * (li - n) * sm[li] for li in range(2 * n + 1)])
            s2 = s * s
            inv_s = 1 / s
            v1 = [mpc(0)] * ng
            v2 = [mpc(0)] * ng
            v3 = [mpc(0)] * ng
            for k in range(ng):
                mid = (uv[k] + sv[k]) / 2
                half = (uv[k] - sv[k]) / 2
                mid_t = (tu[k] + ts[k]) / 2
                half_t = (tu[k] - ts[k]) / 2
                mid_d = (duv[k] + dsv[k]) / 2
                half_d = (duv[k] - dsv[k]) / 2
                i_f = i_h = i_gt = i_hd = i_hh = i_gh = mpc(0)
                for lam, w in zip(lam_nodes, lam_w):
                    p_lam = mid + lam * half
                    dF, dG, dH = fgh.fgh_dpsi_point(p_lam, s, grid.cos[k], grid.sin[k])
                    _, gh, hh = fgh.fgh_point(p_lam, s, grid.cos[k], grid.sin[k])
                    t_lam = mid_t + lam * half_t
                    d_lam = mid_d + lam * half_d
                    i_f += w * dF
                    i_h += w * dH
                    i_gt += w * dG * t_lam
                    i_hd += w * dH * d_lam
                    i_hh += w * hh
                    i_gh += w * gh
                v1[k] = (i_f / 2 + (d + 1) / (2 * b) * inv_s * i_h - i_gt / 2
                         + b * s2 * (duv[k] + dsv[k]) + s2 * i_hd / 2)
                v2[k] = b * s2 * (uv[k] + sv[k]) + s2 * i_hh / 2
                v3[k] = -i_gh / 2
            for li, vv in zip(range(2 * n + 1), grid.analyze(v1)):
                a1.data[li][i] = vv
            for li, vv in zip(range(2 * n + 1), grid.analyze(v2)):
                a2.data[li][i] = vv
            for li, vv in zip(range(2 * n + 1), grid.analyze(v3)):
                a3.data[li][i] = vv
        out = DifferenceField(dpsi, a1, a2, a3, psi_u_ray=pu, psi_s_ray=ps)
        out.pde_residual = _difference_residual(out, spec, grid, ctx)
        return out


def _difference_residual(diff: DifferenceField, spec: UnfoldingSpec,
                         grid: ThetaGrid, ctx: PrecisionCtx) -> mpfr:
    """Worst local relative residual of the linear difference PDE,
    max_s |L(dpsi) - rhs(dpsi)| / |dpsi| over the ray (anchoring-limited
    bottom excluded)."""
    with ctx.active():
        dp = diff.delta_psi
        n = dp.n_modes
        alpha = spec.alpha_of(0, 0)
        L = apply_L(dp, alpha, spec.d)
        dsd = dp.s_derivative()
        worst = mpfr(0)
        nodes = dp.path.nodes
        ycut = abs(nodes[-1]) * mpfr("0.7")
        for i, s in enumerate(nodes):
            if abs(s) > ycut:
                continue
            lv = grid.synth(L.modes_at_node(i))
            pv = grid.synth(dp.modes_at_node(i))
            dv = grid.synth(dsd.modes_at_node(i))
            tv = grid.synth([mpc(0, 1) * (li - n) * dp.data[li][i] for li in range(2 * n + 1)])
            a1v = grid.synth(diff.a1.modes_at_node(i))
            a2v = grid.synth(diff.a2.modes_at_node(i))
            a3v = grid.synth(diff.a3.modes_at_node(i))
            res = mpfr(0)
            scale = mpfr(0)
            for k in range(grid.n_grid):
                rhs = a1v[k] * pv[k] + a2v[k] * dv[k] + (spec.c / s + a3v[k]) * tv[k]
                res = max(res, abs(lv[k] - rhs))
                scale = max(scale, abs(pv[k]))
            if scale > 0:
                worst = max(worst, res / scale)
        return worst


def compute_L0(diff: DifferenceField, spec: UnfoldingSpec, ctx: PrecisionCtx,
               n_depths: int = 5, depth_window=(1.6, 0.75)):
    """a0 = lim s a2^[0](s) by Richardson extrapolation along the ray;
    L0 = a0 / d.  Returns (a0, L0, error_indicator)."""
    with ctx.active():
        nodes = diff.a2.path.nodes
        a20 = diff.a2.mode(0)
        ymin = abs(nodes[0]) * R(depth_window[0])
        ymax = abs(nodes[-1]) * R(depth_window[1])
        picks = _pick_depths(nodes, n_depths, ymin, ymax)
        if len(picks) < 3:
            raise StokesError("not enough ray depth for the a0 extrapolation")
        samples = [(1 / abs(nodes[i]), nodes[i] * a20[i]) for i in picks]
        samples.sort(key=lambda t: -t[0])
        a0, ind = extrapolate_limit(samples, 1, ctx)
        d = spec.d
        # fill in a2_bar = a2 - d L0 / s
        l0 = a0 / d
        bar = diff.a2.copy()
        row = bar.mode(0)
        for i, s in enumerate(nodes):
            row[i] = row[i] - d * l0 / s
        diff.a2_bar = bar
        return a0, l0, ind


def _pick_depths(nodes, k, ymin, ymax):
    import bisect
    ys = [abs(s) for s in nodes]
    lo = 0
    while lo < len(ys) and ys[lo] < ymin:
        lo += 1
    hi = len(ys) - 1
    while hi > 0 and ys[hi] > ymax:
        hi -= 1
    if hi <= lo:
        lo, hi = 0, len(ys) - 1
    idx = [lo + (hi - lo) * j // (k - 1) for j in range(k)]
    return sorted(set(idx))


# --------------------------------------------------------------------------
# right inverse on the ray for the correction equations
# --------------------------------------------------------------------------

class RayRightInverse:
    """Right inverse of  -alpha d_theta + d d_s  on the descending ray.

    Modes l >= 0 are integrated from -i inf (kernel decays downward for
    l > 0, plain convergent tail for l = 0; boundedness forces this choice
    for l > 0 since the homogeneous solution e^{il alpha s/d} grows there).
    Modes l < 0 start from the anchor s0 (top ray node); their homogeneous
    ambiguity decays toward -i inf, so any anchor yields a bounded solution.
    """

    def __init__(self, ray: PanelPath, alpha, d, n_modes: int, ctx: PrecisionCtx):
        self.ray = ray
        self.ctx = ctx
        with ctx.active():
            self.alpha, self.d = R(alpha), R(d)
            self.n_modes = n_modes
            self.lams = {l: mpc(0, -1) * l * self.alpha / self.d
                         for l in range(-n_modes, n_modes + 1)}

    def _pw(self, panel, l):
        with self.ctx.active():
            from .inner import _PWEIGHT_CACHE
            mu = self.lams[l] * panel.half
            key = (str(mu), str(panel.half), panel.order, self.ctx.mantissa_bits)
            w = _PWEIGHT_CACHE.get(key)
            if w is not None:
                return w
            m = panel.order
            xi, _, vinv, _ = vandermonde_data(m, self.ctx)
            pm = _partial_moments(mu, xi, m, self.ctx)
            w = [[panel.half * sum(vinv[k][j] * pm[i][k] for k in range(m))
                  for j in range(m)] for i in range(m)]
            _PWEIGHT_CACHE[key] = w
            return w

    def apply(self, phi: FourierOnPath) -> FourierOnPath:
        ctx = self.ctx
        with ctx.active():
            out = phi.zero_like()
            nodes = phi.path.nodes
            panels = phi.path.panels
            slices = phi.path.node_slices
            for li in range(2 * phi.n_modes + 1):
                l = li - phi.n_modes
                lam = self.lams[l]
                gvals = phi.data[li]
                orow = out.data[li]
                if l < 0:
                    acc = mpc(0)   # anchor at the first ray node region
                    for ip, panel in enumerate(panels):
                        a, b = slices[ip]
                        vals = gvals[a:b]
                        wpart = self._pw(panel, l)
                        for i_loc in range(panel.order):
                            dot = sum(wpart[i_loc][j] * vals[j] for j in range(panel.order))
                            s_node = nodes[a + i_loc]
                            orow[a + i_loc] = (gmpy2.exp(-lam * s_node) * acc
                                               + gmpy2.exp(-lam * (s_node - panel.center)) * dot) / self.d
                        acc += panel.integrate_samples(vals, lam, ctx, lam_key=("r", l))
                else:
                    # from -i inf: tail below the bottom + reverse sweep
                    from .inner import _bottom_anchor
                    al, bl = slices[-1]
                    ray_dir = (panels[-1].b - panels[-1].a)
                    ray_dir = ray_dir / abs(ray_dir)
                    j_bot = _bottom_anchor(nodes[al:bl], gvals[al:bl], gvals,
                                           panels[-1].b, ray_dir, lam, ctx)
                    accb = mpc(0)
                    for ip in range(len(panels) - 1, -1, -1):
                        panel = panels[ip]
                        a, b = slices[ip]
                        vals = gvals[a:b]
                        wpart = self._pw(panel, l)
                        full = panel.integrate_samples(vals, lam, ctx, lam_key=("r", l))
                        emc = gmpy2.exp(lam * panel.center) if lam != 0 else mpc(1)
                        for i_loc in range(panel.order - 1, -1, -1):
                            dot = sum(wpart[i_loc][j] * vals[j] for j in range(panel.order))
                            s_node = nodes[a + i_loc]
                            part_up = full - emc * dot
                            j_s = j_bot - (part_up + accb)
                            # J(s) = int_{-i inf}^{s} = j_bot - int_s^{bot}
                            if lam != 0:
                                orow[a + i_loc] = gmpy2.exp(-lam * s_node) * j_s / self.d
                            else:
                                orow[a + i_loc] = j_s / self.d
                        accb += full
            return out


@dataclass
class PhaseAmplitudeCorrections:
    phi: FourierOnPath
    p1_in: FourierOnPath
    phi_slope: mpfr
    p1_slope: mpfr
    injectivity_margin: mpfr
    p1_max: mpfr


def solve_corrections(diff: DifferenceField, l0, spec: UnfoldingSpec,
                      ctx: PrecisionCtx, tol=None, max_iter: int = 40) -> PhaseAmplitudeCorrections:
    """Fixed points for the phase correction phi and amplitude factor P1."""
    with ctx.active():
        alpha = spec.alpha_of(0, 0)
        d, c = spec.d, spec.c
        n = diff.delta_psi.n_modes
        grid = ThetaGrid(n, max(4 * n, 16), ctx)
        ginv = RayRightInverse(diff.delta_psi.path, alpha, d, n, ctx)
        tol = mpfr(tol) if tol is not None else mpfr("1e-18")
        if diff.a2_bar is None:
            raise StokesError("compute_L0 must run before solve_corrections")

        def rhs_phi(phi_f):
            out = phi_f.zero_like()
            dphi = phi_f.s_derivative()
            nodes = phi_f.path.nodes
            for i, s in enumerate(nodes):
                a2v = grid.synth(diff.a2.modes_at_node(i))
                abv = grid.synth(diff.a2_bar.modes_at_node(i))
                a3v = grid.synth(diff.a3.modes_at_node(i))
                pv = grid.synth(dphi.modes_at_node(i))
                tm = [mpc(0, 1) * (li - n) * phi_f.data[li][i] for li in range(2 * n + 1)]
                tv = grid.synth(tm)
                vals = []
                for k in range(grid.n_grid):
                    vals.append(alpha / d * abv[k] + (c + alpha * l0) / d / s * a2v[k]
                                + a3v[k] + a2v[k] * pv[k] + (c / s + a3v[k]) * tv[k])
                for li, vv in zip(range(2 * n + 1), grid.analyze(vals)):
                    out.data[li][i] = vv
            return out

        def rhs_p1(p_f):
            out = p_f.zero_like()
            dp = p_f.s_derivative()
            nodes = p_f.path.nodes
            for i, s in enumerate(nodes):
                a1v = grid.synth(diff.a1.modes_at_node(i))
                a2v = grid.synth(diff.a2.modes_at_node(i))
                a3v = grid.synth(diff.a3.modes_at_node(i))
                pv = grid.synth(p_f.modes_at_node(i))
                dv = grid.synth(dp.modes_at_node(i))
                tv = grid.synth([mpc(0, 1) * (li - n) * p_f.data[li][i] for li in range(2 * n + 1)])
                vals = []
                for k in range(grid.n_grid):
                    vals.append((a1v[k] + 2 / d / s * a2v[k]) * (1 + pv[k])
                                + a2v[k] * dv[k] + (c / s + a3v[k]) * tv[k])
                for li, vv in zip(range(2 * n + 1), grid.analyze(vals)):
                    out.data[li][i] = vv
            return out

        phi = diff.delta_psi.zero_like()
        p1 = diff.delta_psi.zero_like()
        for name, rhs, f in (("phi", rhs_phi, phi), ("p1", rhs_p1, p1)):
            cur = f
            prev_corr = None
            corr0 = None
            for it in range(max_iter):
                new = ginv.apply(rhs(cur))
                corr = diff_norm(new, cur, weight_power=1)
                if corr0 is None:
                    corr0 = corr
                cur = new
                if corr <= tol:
                    break
                # plateau at the accuracy floor of the a-coefficient data
                if prev_corr is not None and corr >= prev_corr / 2 and corr <= corr0 * mpfr("1e-8"):
                    break
                if prev_corr is not None and prev_corr > 0 and corr / prev_corr >= 1 and it > 2:
                    raise StokesError(f"{name} fixed point not contracting (enlarge rho_in)")
                prev_corr = corr
            else:
                raise StokesError(f"{name} fixed point did not converge")
            if name == "phi":
                phi = cur
            else:
                p1 = cur
        nodes = phi.path.nodes
        xs = [abs(s) for s in nodes]

        def slope_or_zero(vals):
            if all(v == 0 for v in vals):
                return mpfr(0)
            return fit_log_slope(xs, vals, ctx)[0]

        phi_slope = slope_or_zero(phi.node_norms())
        p1_slope = slope_or_zero(p1.node_norms())
        # injectivity margin: min |alpha/d + d_s((c+alpha L0)/d log s + phi)|
        dphi = phi.s_derivative()
        margin = None
        p1max = mpfr(0)
        for i, s in enumerate(nodes):
            dv = grid.synth(dphi.modes_at_node(i))
            pv = grid.synth(p1.modes_at_node(i))
            for k in range(grid.n_grid):
                v = abs(alpha / d + (c + alpha * l0) / (d * s) + dv[k])
                margin = v if margin is None else min(margin, v)
                p1max = max(p1max, abs(pv[k]))
        return PhaseAmplitudeCorrections(phi, p1, phi_slope, p1_slope, margin, p1max)


# --------------------------------------------------------------------------
# Upsilon extraction and the Stokes constant
# --------------------------------------------------------------------------

@dataclass
class StokesData:
    a0: mpc
    L0: mpc
    L0_indicator: mpfr
    upsilon_in: dict                       # l < 0 -> complex
    upsilon_ind: dict                      # l < 0 -> error indicator
    onesided_ratio: mpfr                   # sum_{l>=0} |proj| / |dominant|
    c_star_abs: mpfr
    c_star: mpc | None = None
    L_plus: mpc | None = None
    phase_fitted: bool = True
    pde_residual: mpfr | None = None
    corrections: PhaseAmplitudeCorrections | None = None
    extras: dict = field(default_factory=dict)


def extract_upsilon(diff: DifferenceField, corr: PhaseAmplitudeCorrections, l0,
                    spec: UnfoldingSpec, ctx: PrecisionCtx, l_list=(-1, -2, -3),
                    depth_start_factor=2.0, n_depths: int = 5,
                    rho_in=None) -> tuple[dict, dict, mpfr]:
    """Project k = Delta psi / (s^{2/d}(1 + P1)) onto e^{il tau} in the
    variable tau = xi_in(s, theta) (change of variables with Jacobian
    1 + d_theta phi), then extrapolate the remaining 1/|s| dependence.

    Using the full theta-dependent phase, rather than only the mean of phi,
    keeps the phi harmonics from leaking the dominant mode into neighbours;
    it is what makes the one-sided-spectrum check meaningful.  Modes with
    |l| >= 2 are exponentially subdominant, so their windows sit at the
    shallow end of the ray where their signal still clears the noise floor.
    """
    with ctx.active():
        alpha = spec.alpha_of(0, 0)
        d, c = spec.d, spec.c
        dp = diff.delta_psi
        n = dp.n_modes
        grid = ThetaGrid(n, max(4 * n, 16), ctx)
        nodes = dp.path.nodes
        rho = R(rho_in) if rho_in is not None else abs(nodes[0])
        ymax = abs(nodes[-1]) * mpfr("0.72")
        two_d = 2 / d
        phase_const = (c + alpha * l0) / d
        dphi = corr.phi.s_derivative()  # unused but keeps phi panel caches warm

        def projections(i):
            """tau-projections of k at node i for all l in [-n, n]."""
            s = nodes[i]
            pv = grid.synth(dp.modes_at_node(i))
            p1v = grid.synth(corr.p1_in.modes_at_node(i))
            fm = corr.phi.modes_at_node(i)
            fv = grid.synth(fm)
            ftv = grid.synth([mpc(0, 1) * (li - n) * fm[li] for li in range(2 * n + 1)])
            base = alpha * s / d + phase_const * gmpy2.log(s)
            out = {}
            for l in range(-n, n + 1):
                acc = mpc(0)
                for k in range(grid.n_grid):
                    kt = pv[k] / (s ** two_d * (1 + p1v[k]))
                    ph = base + fv[k]
                    acc += kt * (1 + ftv[k]) * gmpy2.exp(-mpc(0, 1) * l * ph) \
                        * grid.roots[(-l * k) % grid.n_grid]
                out[l] = acc / grid.n_grid
            return out

        proj_cache: dict = {}

        def proj_at(i):
            if i not in proj_cache:
                proj_cache[i] = projections(i)
            return proj_cache[i]

        ups: dict = {}
        ind: dict = {}
        for l in l_list:
            # each extra |l| costs e^{-alpha Y/d} of signal: shallower window
            y_lo = R(depth_start_factor) * rho if l == -1 else mpfr("1.1") * rho
            y_hi = ymax if l == -1 else min(ymax, mpfr("2.6") * rho)
            picks = _pick_depths(nodes, n_depths, y_lo, y_hi)
            if len(picks) < 3:
                raise StokesError("extraction window too small: extend the ray")
            samples = []
            for i in picks:
                samples.append((1 / abs(nodes[i]), proj_at(i)[l]))
            samples.sort(key=lambda t: -t[0])
            u, e = extrapolate_limit(samples, 1, ctx)
            ups[l] = u
            ind[l] = e
        # one-sided spectrum check at the deepest node of the main window
        picks = _pick_depths(nodes, n_depths, R(depth_start_factor) * rho, ymax)
        i_deep = picks[-1]
        pj = proj_at(i_deep)
        dominant = abs(pj[-1])
        pos_sum = sum(abs(pj[l]) for l in range(0, n + 1))
        ratio = pos_sum / dominant if dominant > 0 else (
            mpfr("inf") if pos_sum > 0 else mpfr(0))
        return ups, ind, ratio


def assemble_c_star(upsilon_m1, l0, spec: UnfoldingSpec, ctx: PrecisionCtx,
                    l_plus=None):
    """C* = 2 (-i)^{2/d} Upsilon^[-1] e^{-(c + alpha L0) pi/(2 d) + i alpha L+}.

    Without L+ only |C*| is determined (the L+ factor is a pure rotation for
    real alpha L+); returns (abs, full_or_None).
    """
    with ctx.active():
        if upsilon_m1 is None:
            raise StokesError("Upsilon^[-1] missing")
        alpha = spec.alpha_of(0, 0)
        d, c = spec.d, spec.c
        pi = gmpy2.const_pi()
        base = 2 * (mpc(0, -1) ** (2 / d)) * mpc(upsilon_m1) \
            * gmpy2.exp(-(c + alpha * mpc(l0)) * pi / (2 * d))
        if l_plus is None:
            # |e^{i alpha L+}| = 1; modulus uses Re(alpha L0) in the phase factor
            mag = 2 * abs(mpc(upsilon_m1)) * gmpy2.exp(
                -(c + (alpha * mpc(l0)).real) * pi / (2 * d))
            return mag, None
        full = base * gmpy2.exp(mpc(0, 1) * alpha * mpc(l_plus))
        return abs(full), full


def stokes_pipeline(res_u: InnerSolveResult, res_s: InnerSolveResult,
                    spec: UnfoldingSpec, ctx: PrecisionCtx, l_plus=None,
                    l_list=(-1, -2, -3), depth_start_factor=2.0,
                    n_depths: int = 5, rho_in=None) -> StokesData:
    diff = difference_and_coefficients(res_u, res_s, spec, ctx)
    a0, l0, ind0 = compute_L0(diff, spec, ctx)
    corr = solve_corrections(diff, l0, spec, ctx)
    ups, ind, ratio = extract_upsilon(diff, corr, l0, spec, ctx, l_list=l_list,
                                      depth_start_factor=depth_start_factor,
                                      n_depths=n_depths, rho_in=rho_in)
    mag, full = assemble_c_star(ups[-1], l0, spec, ctx, l_plus=l_plus)
    return StokesData(a0=a0, L0=l0, L0_indicator=ind0, upsilon_in=ups,
                      upsilon_ind=ind, onesided_ratio=ratio, c_star_abs=mag,
                      c_star=full, L_plus=l_plus, phase_fitted=l_plus is None,
                      pde_residual=diff.pde_residual, corrections=corr,
                      extras={"diff": diff})
