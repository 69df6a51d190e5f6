import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from stokeslab.precision import PrecisionCtx
from stokeslab.model import InnerNonlinearity
from stokeslab.samples import sample_conservative, zero_perturbation
from stokeslab.numerics import fit_log_slope, panelize, PanelPath
from stokeslab.inner import (InnerDomainSpec, FourierOnPath, RightInverseG, ThetaGrid,
                             apply_L, apply_M, build_branch_path, diff_norm, solve_inner,
                             UNSTABLE, STABLE, ModeWindowOverflow)

CTX = PrecisionCtx(192, "1e-40", "1e-40")


@pytest.fixture(scope="module")
def branch_paths():
    with CTX.active():
        return {b: build_branch_path(b, 4, CTX, r_max_factor=400, y_deep_factor=10)
                for b in (UNSTABLE, STABLE)}


def test_domain_membership():
    dom_u = InnerDomainSpec(0.5, 4, UNSTABLE)
    dom_s = InnerDomainSpec(0.5, 4, STABLE)
    assert dom_u.contains(mpc(-10, -5), CTX)
    assert dom_u.contains(mpc(0, -4), CTX)
    assert not dom_u.contains(mpc(10, -4), CTX)
    assert dom_s.contains(mpc(10, -4), CTX)
    assert not dom_s.contains(mpc(-10, -4), CTX)


def test_solver_paths_inside_domains(branch_paths):
    for b, bp in branch_paths.items():
        dom = InnerDomainSpec(0.20, 3.9, b)
        for s in bp.path.nodes:
            assert dom.contains(s, CTX)


def test_kernel_annihilation():
    # s^(2/d) e^{il alpha s/d} e^{il theta} lies in the kernel of L; needs a
    # path fine enough to resolve the e^{il alpha s} oscillation spectrally
    with CTX.active():
        panels = panelize(mpc(-12, -4), mpc(-4, -4), CTX, order=28,
                          rel_len="0.05", min_len="0.4", max_len="0.8")
        path = PanelPath(panels, CTX)
        N = 3
        psi = FourierOnPath(path, N, "0.4", CTX)
        alpha, d = mpfr(1), mpfr(1)
        for l in range(-3, 4):
            for i, s in enumerate(path.nodes):
                psi.data[l + N][i] = s ** 2 * gmpy2.exp(mpc(0, 1) * l * alpha * s / d)
        out = apply_L(psi, alpha, d)
        for l in range(-3, 4):
            for i, s in enumerate(path.nodes):
                scale = abs(psi.data[l + N][i])
                assert abs(out.data[l + N][i]) <= mpfr("1e-25") * scale


def test_right_inverse_identity_battery(branch_paths):
    # ||L(G(phi)) - phi|| / ||phi|| <= 1e-10 over decay orders 2..6, |l| <= 8
    with CTX.active():
        alpha, d = mpfr(1), mpfr(1)
        for b, bp in branch_paths.items():
            N = 8
            phi = FourierOnPath(bp.path, N, "0.4", CTX)
            cases = [(l, 2 + (abs(l) % 5)) for l in range(-8, 9)]
            for l, q in cases:
                for i, w in enumerate(bp.path.nodes):
                    phi.data[l + N][i] = w ** (-q)
            g = RightInverseG(bp, alpha, d, N, CTX)
            lg = apply_L(g.apply(phi), alpha, d)
            err, scale = mpfr(0), mpfr(0)
            for li in range(2 * N + 1):
                for i in range(len(bp.path.nodes)):
                    err = max(err, abs(lg.data[li][i] - phi.data[li][i]))
                    scale = max(scale, abs(phi.data[li][i]))
            assert err / scale <= mpfr("1e-10")


def test_right_inverse_closed_form(branch_paths):
    # d=1, l=0, phi = w^-4: G(phi) = s^2 int_{-inf}^s w^-6 dw = -s^-3/5
    with CTX.active():
        bp = branch_paths[UNSTABLE]
        N = 2
        phi = FourierOnPath(bp.path, N, "0.4", CTX)
        for i, w in enumerate(bp.path.nodes):
            phi.data[0 + N][i] = w ** -4
        g = RightInverseG(bp, 1, 1, N, CTX).apply(phi)
        for i in range(0, len(bp.path.nodes), 37):
            s = bp.path.nodes[i]
            assert abs(g.data[0 + N][i] - (-s ** -3 / 5)) < mpfr("1e-14") * abs(s ** -3)


def test_right_inverse_quadrature_self_convergence(branch_paths):
    # doubling the panel order leaves G(M(0,0)) unchanged within 10*rtol-ish
    with CTX.active():
        spec = sample_conservative()
        vals = []
        for order in (12, 20):
            bp = build_branch_path(UNSTABLE, 4, CTX, r_max_factor=120,
                                   y_deep_factor=6, order_tail=order, order_ray=order)
            grid = ThetaGrid(6, 24, CTX)
            fgh = InnerNonlinearity(spec, CTX).at(0, 0)
            psi = FourierOnPath(bp.path, 6, "0.4", CTX)
            m0 = apply_M(psi, 0, 0, fgh, spec, grid)
            g = RightInverseG(bp, 1, 1, 6, CTX).apply(m0)
            vals.append(g.path.interp(g.mode(0), mpc(0, -6)))
        assert abs(vals[0] - vals[1]) < mpfr("1e-12") * abs(vals[1])


def test_mode_decay_gain_zero_mean(branch_paths):
    # zero-mean phi: no loss of one power in |s| under G
    with CTX.active():
        bp = branch_paths[UNSTABLE]
        N = 3
        phi = FourierOnPath(bp.path, N, "0.4", CTX)
        for l in (-2, 1, 3):
            for i, w in enumerate(bp.path.nodes):
                phi.data[l + N][i] = w ** -4
        g = RightInverseG(bp, 1, 1, N, CTX).apply(phi)
        norm_phi = phi.weighted_norm(4)
        norm_g = g.weighted_norm(4)       # same weight: no power lost
        assert norm_g < 40 * norm_phi


def test_m00_decay_slope(branch_paths):
    # M(0,0) = F(0,0) + ((d+1)/b) H(0,0)/s decays like |s|^-4
    with CTX.active():
        spec = sample_conservative()
        bp = branch_paths[UNSTABLE]
        grid = ThetaGrid(8, 32, CTX)
        fgh = InnerNonlinearity(spec, CTX).at(0, 0)
        psi = FourierOnPath(bp.path, 8, "0.4", CTX)
        m0 = apply_M(psi, 0, 0, fgh, spec, grid)
        nn = m0.node_norms()
        xs, vs = [], []
        for i, s in enumerate(bp.path.nodes):
            if 8 <= abs(s) <= 200 and i < bp.ray_start_index:
                xs.append(abs(s))
                vs.append(nn[i])
        slope, _ = fit_log_slope(xs, vs, CTX)
        assert mpfr("-4.3") <= slope <= mpfr("-3.7")


def test_apply_L_power_rule(branch_paths):
    # psi = s^-3 mode 0, d=1: L(psi) = -3 s^-4 - 2 s^-4 = -5 s^-4
    with CTX.active():
        bp = branch_paths[UNSTABLE]
        psi = FourierOnPath(bp.path, 1, "0.4", CTX)
        for i, s in enumerate(bp.path.nodes):
            psi.data[1][i] = s ** -3
        out = apply_L(psi, 1, 1)
        checked = 0
        for i, s in enumerate(bp.path.nodes):
            if abs(s) <= 60:
                assert abs(out.data[1][i] - (-5 * s ** -4)) < mpfr("2e-11") * abs(s ** -4)
                checked += 1
        assert checked > 50


def test_convolution_vs_grid_product():
    # psi with only mode l=1: the Ghat d_theta psi term's modes 0 and 2 equal
    # the scalar products with the corresponding Ghat modes
    with CTX.active():
        spec = sample_conservative()
        bp = build_branch_path(UNSTABLE, 4, CTX, r_max_factor=60, y_deep_factor=4,
                               order_tail=12, order_ray=12)
        N = 6
        grid = ThetaGrid(N, 32, CTX)
        fgh = InnerNonlinearity(spec, CTX).at(0, 0)
        i0 = bp.ray_start_index + 3
        s = bp.path.nodes[i0]
        c1 = mpc(mpfr("3e-4"), mpfr("1e-4"))
        # Ghat modes at psi(theta) = c1 e^{i theta} on a dense grid
        dense = ThetaGrid(12, 64, CTX)
        gh_vals = []
        prod_vals = []
        for k in range(dense.n_grid):
            e = gmpy2.exp(mpc(0, 1) * dense.theta[k])
            psi_v = c1 * e
            dpsi_v = mpc(0, 1) * c1 * e
            _, gh, _ = fgh.fgh_point(psi_v, s, dense.cos[k], dense.sin[k])
            gh_vals.append(gh)
            prod_vals.append(gh * dpsi_v)
        gh_modes = dense.analyze(gh_vals)
        prod_modes = dense.analyze(prod_vals)
        ic1 = mpc(0, 1) * c1
        # product modes: (Ghat * i c1 e^{i theta})^[l] = i c1 * Ghat^[l-1]
        assert abs(prod_modes[0 + 12] - ic1 * gh_modes[-1 + 12]) < mpfr("1e-40")
        assert abs(prod_modes[2 + 12] - ic1 * gh_modes[1 + 12]) < mpfr("1e-40")


def test_solve_zero_perturbation():
    with CTX.active():
        res = solve_inner(UNSTABLE, zero_perturbation(),
                          InnerDomainSpec(0.6, 4, UNSTABLE), 4, CTX,
                          tol="1e-30", r_max_factor=60, y_deep_factor=4,
                          panel_order=12)
        assert len(res.corrections) <= 2
        assert res.corrections[-1] == 0
        assert res.psi.weighted_norm(3) == 0


def test_mode_window_overflow_guard():
    with CTX.active():
        grid = ThetaGrid(2, 16, CTX)
        vals = [gmpy2.exp(mpc(0, 1) * 5 * t) for t in grid.theta]  # pure mode 5
        with pytest.raises(ModeWindowOverflow):
            grid.analyze(vals, overflow_tol="1e-6")


def test_fourier_on_path_serialization(tmp_path, branch_paths):
    with CTX.active():
        bp = branch_paths[UNSTABLE]
        f = FourierOnPath(bp.path, 3, "0.4", CTX)
        for li in range(7):
            for i, s in enumerate(bp.path.nodes):
                f.data[li][i] = s ** -(li + 1) * mpc(mpfr("1.25"), mpfr("-0.5"))
        p = tmp_path / "psi.dat"
        with open(p, "w") as fh:
            f.dump(fh)
        with open(p) as fh:
            g = FourierOnPath.load(fh, CTX)
        assert len(g.path.nodes) == len(f.path.nodes)
        for li in range(7):
            for i in range(len(f.path.nodes)):
                assert g.data[li][i] == f.data[li][i]
