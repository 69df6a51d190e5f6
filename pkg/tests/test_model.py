import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from stokeslab.precision import PrecisionCtx
from stokeslab.poly import Poly
from stokeslab.model import (ModelError, UnfoldingSpec, critical_points, heteroclinic,
                             scale_system, recomposition_weight, InnerNonlinearity,
                             BranchTrackingError)
from stokeslab.samples import sample_conservative, sample_dissipative, zero_perturbation

CTX = PrecisionCtx(192, "1e-40", "1e-40")


def test_spec_invariants():
    with CTX.active():
        with pytest.raises(ModelError):
            UnfoldingSpec(alpha0=0, beta1=1, gamma2=1)
        with pytest.raises(ModelError):
            UnfoldingSpec(alpha0=1, beta1=-1, gamma2=1)
        with pytest.raises(ModelError):  # degree-2 monomial in fbar
            UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, fbar={(2, 0, 0, 0, 0): 1})
        with pytest.raises(ModelError):  # h3 mismatch
            UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, h3="0.5",
                          hbar={(0, 0, 3, 0, 0): "0.25"})
        with pytest.raises(ModelError):  # conservative needs beta1 = 1
            UnfoldingSpec(alpha0=1, beta1=2, gamma2=1, conservative=True)
        with pytest.raises(ModelError):  # conservative needs zero divergence
            UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, conservative=True,
                          fbar={(3, 0, 0, 0, 0): "0.1"})
        # the gamma quadratic block of hbar is allowed
        UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, gamma3="0.5", gamma4="0.25",
                      hbar={(0, 0, 0, 2, 0): "0.5", (0, 0, 0, 0, 2): "0.25"})


def test_scaled_params_guard():
    with CTX.active():
        spec = zero_perturbation()
        with pytest.raises(ModelError):
            scale_system(spec, "-0.01", 0, CTX)
        with pytest.raises(ModelError):
            scale_system(spec, "0.01", "0.2", CTX)   # |nu| >= beta1 sqrt(mu)


def test_recomposition_cubic_monomial():
    # fbar = x^3, delta = 0.1, x = 2: delta^-2 f(delta x) = delta x^3 = 0.8
    with CTX.active():
        spec = UnfoldingSpec(alpha0=1, beta1=1, gamma2=1, fbar={(3, 0, 0, 0, 0): 1})
        _, system = scale_system(spec, "0.01", 0, CTX)
        val = system.perturbation[0].eval([mpfr(2), mpfr(0), mpfr(0)])
        assert abs(val - mpfr("0.8")) < mpfr("1e-50")


def test_recomposition_degree_bookkeeping():
    # every monomial of degree k >= 3 carries exactly delta^(k-2) (mu twice)
    import random
    rng = random.Random(7)
    coeffs = {}
    for _ in range(12):
        expo = tuple(rng.randint(0, 2) for _ in range(5))
        if sum(expo) < 3 or sum(expo) > 5:
            continue
        coeffs[expo] = rng.choice(["0.5", "-0.25", "1.5"])
    p = Poly(5, coeffs)
    for w, expo, _ in p.subs_prefactor((1, 1, 1, 2, 1)):
        i, j, m, q, r = expo
        assert w == recomposition_weight(expo)
        assert w - 2 >= 1 or (q + r) >= 2


def test_polar_cartesian_chain_rule():
    # independent oracle: finite differences of the coordinate map along the flow
    ctx = PrecisionCtx(256, "1e-60", "1e-60")
    with ctx.active():
        spec = sample_conservative()
        _, system = scale_system(spec, "0.01", 0, ctx)
        x, y, z = mpfr("0.4"), mpfr("-0.7"), mpfr("0.2")
        f = system.cartesian.eval([x, y, z])
        h = mpfr("1e-24")
        def polar(st):
            r = (st[0] ** 2 + st[1] ** 2) / 2
            th = gmpy2.atan2(st[1].real, st[0].real)
            return [r, th, st[2]]
        plus = polar([x + h * f[0], y + h * f[1], z + h * f[2]])
        minus = polar([x - h * f[0], y - h * f[1], z - h * f[2]])
        fd = [(a - b) / (2 * h) for a, b in zip(plus, minus)]
        pol = system.polar_rhs(polar([mpc(x), mpc(y), mpc(z)]))
        for a, b in zip(fd, pol):
            assert abs(a - b) < mpfr("1e-30")


def test_unperturbed_polar_reduction():
    with CTX.active():
        spec = zero_perturbation()
        _, system = scale_system(spec, "0.01", 0, CTX)
        st = [mpfr("0.3"), mpfr("0.7"), mpfr("-0.2")]
        got = system.polar_rhs(st)
        want = system.unperturbed_polar_rhs(st)
        for a, b in zip(got, want):
            assert abs(a - b) < mpfr("1e-50")


def test_critical_points_unperturbed_exact():
    with CTX.active():
        _, system = scale_system(zero_perturbation(), "0.01", 0, CTX)
        sm, sp = critical_points(system, CTX)
        assert max(abs(v) for v in sm.point[:2]) == 0
        assert sm.point[2] == -1 and sp.point[2] == 1


def test_critical_points_perturbed():
    with CTX.active():
        spec = sample_conservative()
        shifts = []
        for mu in ("0.01", "0.0025"):     # delta = 0.1 and 0.05
            _, system = scale_system(spec, mu, 0, CTX)
            sm, sp = critical_points(system, CTX)
            assert sp.residual <= mpfr("1e-40")
            shifts.append(abs(sp.point[2] - 1))
        # z-shift is O(delta^2): halving delta gives ~4x reduction
        ratio = shifts[0] / shifts[1]
        assert 2.5 < ratio < 6.5
        # saddle-focus: real eigenvalue and pair have opposite-sign real parts
        lam_r = sp.eigvals[sp.real_eig_index]
        lam_p = sp.eigvals[sp.pair_indices[0]]
        assert (lam_r.real * lam_p.real).real < 0


def test_heteroclinic_values():
    with CTX.active():
        spec = zero_perturbation()
        h = heteroclinic(0, "0.4", spec, "0.1", CTX)
        assert abs(h.r - 1) < mpfr("1e-50")      # (d+1)/(2b) = 1 for d = b = 1
        assert abs(h.z) < mpfr("1e-50")
        assert abs(h.theta - mpfr("0.4")) < mpfr("1e-50")
        h1 = heteroclinic(1, 0, spec, "0.1", CTX)
        assert abs(h1.z - gmpy2.tanh(mpfr(1))) < mpfr("1e-55")
        assert abs(h1.r - 1 / gmpy2.cosh(mpfr(1)) ** 2) < mpfr("1e-55")
        assert abs(-1 + h1.r * 2 * 1 / 2 + h1.z ** 2 + h1.r - h1.r) < mpfr("1e-50")


def test_heteroclinic_complex_time():
    # independent evaluation through exp-based definitions at t = i pi/4
    with CTX.active():
        spec = zero_perturbation()
        pi = gmpy2.const_pi()
        t = mpc(0, pi / 4)
        h = heteroclinic(t, 0, spec, "0.1", CTX)
        e = gmpy2.exp(t)
        tanh_direct = (e - 1 / e) / (e + 1 / e)
        sech2_direct = (2 / (e + 1 / e)) ** 2
        assert abs(h.z - tanh_direct) < mpfr("1e-55")
        assert abs(h.r - sech2_direct) < mpfr("1e-55")
        assert abs(h.z - mpc(0, 1)) < mpfr("1e-55")   # i tan(pi/4) = i


def test_heteroclinic_gamma_identity_grid():
    with CTX.active():
        spec = sample_conservative()
        d, b = spec.d, spec.b
        for k in range(41):
            t = mpfr(-5) + mpfr(k) / 4
            h = heteroclinic(t, 0, spec, "0.1", CTX)
            assert abs(-1 + 2 * b * h.r / (d + 1) + h.z ** 2) < mpfr("1e-50")


def test_heteroclinic_residual_in_unperturbed_field():
    # closed-form time derivatives vs the unperturbed polar field, 41 points
    with CTX.active():
        spec = zero_perturbation()
        params, system = scale_system(spec, "0.04", 0, CTX)
        d = spec.d
        for k in range(41):
            t = mpfr(-5) + mpfr(k) / 4
            h = heteroclinic(t, "0.2", spec, params.delta, CTX)
            rhs = system.unperturbed_polar_rhs([h.r, h.theta, h.z])
            closed = [-2 * d * h.r * h.z,
                      -params.alpha / params.delta - spec.c * h.z,
                      d * (1 - h.z ** 2)]
            for a, b_ in zip(closed, rhs):
                assert abs(a - b_) < mpfr("1e-25")


def test_heteroclinic_singularity_guard():
    with CTX.active():
        pi = gmpy2.const_pi()
        with pytest.raises(ModelError):
            heteroclinic(mpc(0, pi / 2), 0, zero_perturbation(), "0.1", CTX)


def test_fgh_zero_perturbation():
    with CTX.active():
        ev = InnerNonlinearity(zero_perturbation(), CTX).at(0, 0)
        f, g, h = ev.fgh_point(mpc("0.001"), mpc(-2, -5), mpfr(1), mpfr(0))
        assert f == 0 and g == 0 and h == 0


def test_rho_identity_and_branch():
    with CTX.active():
        spec = sample_conservative()
        ev = InnerNonlinearity(spec, CTX).at("0.05", 0)
        d, b = spec.d, spec.b
        for s in (mpc(-3, -4), mpc(0, -5), mpc(2, -6)):
            psi = mpc(mpfr("0.001"), mpfr("0.002"))
            rho = ev.rho(psi, s)
            ident = rho ** 2 - ((d + 1) / b * (mpfr("0.05") ** 2 - s ** -2) + 2 * psi)
            assert abs(ident) < mpfr("1e-50")
        # on the negative imaginary axis at delta=0, psi=0 the branch is positive real
        ev0 = InnerNonlinearity(spec, CTX).at(0, 0)
        r0 = ev0.rho(0, mpc(0, -5))
        assert r0.real > 0 and abs(r0.imag) < mpfr("1e-55")


def test_rho_branch_continuity_step_refinement():
    # along a ray in the inner domain the continued branch is step-independent
    with CTX.active():
        spec = sample_conservative()
        ev = InnerNonlinearity(spec, CTX).at(0, 0)
        import math
        vals_coarse = []
        vals_fine = []
        for n, out in ((24, vals_coarse), (48, vals_fine)):
            prev_arg = None
            for k in range(n + 1):
                s = mpc(-4, -4) + mpc(-8, -2) * mpfr(k) / n
                rho = ev.rho(mpc("0.001"), s)
                ph = gmpy2.phase(rho)
                if prev_arg is not None:
                    dph = abs(ph - prev_arg)
                    assert min(dph, abs(dph - 2 * gmpy2.const_pi())) < gmpy2.const_pi() / 4
                prev_arg = ph
                out.append(rho)
        assert abs(vals_coarse[-1] - vals_fine[-1]) < mpfr("1e-45")


def test_rho_zero_aborts():
    with CTX.active():
        spec = sample_conservative()
        ev = InnerNonlinearity(spec, CTX).at(0, 0)
        s = mpc(0, -5)
        # choose psi so the radicand hits the cut region
        bad_psi = (mpfr(-1) - 1) * (spec.d + 1) / (2 * spec.b * s * s) * (-1)
        with pytest.raises(BranchTrackingError):
            ev.rho(bad_psi, s)


def test_dissipative_sample_has_divergence():
    spec = sample_dissipative()
    div = spec.fbar.diff(0) + spec.gbar.diff(1) + spec.hbar.diff(2)
    assert div
