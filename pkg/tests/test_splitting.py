import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from stokeslab.precision import PrecisionCtx
from stokeslab.model import critical_points, heteroclinic, scale_system
from stokeslab.samples import sample_conservative, sample_dissipative, zero_perturbation
from stokeslab.splitting import (LocalSeeder, SectionSpec, FoldDetected, SplittingError,
                                 globalize_to_section, measure_splitting, find_nu0,
                                 seed_local_manifold, precision_for_delta, _check_graph,
                                 UNSTABLE, STABLE)

CTX = PrecisionCtx(192, "1e-36", "1e-36")


def test_section_spec_invariants():
    with pytest.raises(ValueError):
        SectionSpec(0, 24)       # below 32
    with pytest.raises(ValueError):
        SectionSpec(0, 48)       # not a power of two
    sec = SectionSpec("0.3", 32)
    with CTX.active():
        z = sec.z_star(zero_perturbation(), CTX)
        assert abs(z - gmpy2.tanh(mpfr("0.3"))) < mpfr("1e-50")


def test_precision_policy():
    assert precision_for_delta(0.5) == 192
    bits = precision_for_delta(0.09)
    assert 300 < bits < 330


def test_seeds_unperturbed_eigenplane():
    # zero perturbation at S+: the stable plane is {z = 1} to first order
    with CTX.active():
        _, system = scale_system(zero_perturbation(), "0.04", 0, CTX)
        _, sp = critical_points(system, CTX)
        seeder, seeds = seed_local_manifold(sp, system, STABLE, "1e-3", 8, CTX)
        for s in seeds:
            r2 = abs(s[0]) ** 2 + abs(s[1]) ** 2
            assert abs(r2 - mpfr("1e-6")) < mpfr("1e-8") * 4
            assert abs(s[2] - 1) < mpfr("1e-5")


def test_seed_tangency_third_order():
    # halving the radius cuts the invariance defect by ~8 (O(radius^3))
    with CTX.active():
        spec = sample_conservative()
        _, system = scale_system(spec, "0.04", 0, CTX)
        sm, _ = critical_points(system, CTX)
        seeder = LocalSeeder.build(sm, system, UNSTABLE, CTX)
        d1 = seeder.invariance_defect(mpc(mpfr("1e-2"), mpfr("0.4e-2")))
        d2 = seeder.invariance_defect(mpc(mpfr("0.5e-2"), mpfr("0.2e-2")))
        assert 5 < d1 / d2 < 12


def test_seeds_follow_linear_flow_short_time():
    # flowing a seed a short time stays near the linearized spiral
    from stokeslab.numerics.series import integrate_ivp
    with CTX.active():
        spec = sample_conservative()
        _, system = scale_system(spec, "0.04", 0, CTX)
        sm, _ = critical_points(system, CTX)
        seeder = LocalSeeder.build(sm, system, UNSTABLE, CTX)
        w0 = mpc(mpfr("1e-3"), 0)
        y0 = seeder.state(w0)
        t = mpfr("0.25")
        tr = integrate_ivp(system.cartesian, y0, (0, t), CTX)
        lin = seeder.state(w0 * gmpy2.exp(seeder.lam * t))
        err = max(abs(a - b) for a, b in zip(tr.y_end, lin))
        assert err < mpfr("1e-7")    # O(radius^2 * t)-ish


def test_zero_perturbation_degenerate_splitting():
    with CTX.active():
        sec = SectionSpec(0, 32)
        e = measure_splitting(zero_perturbation(), "0.04", 0, sec, CTX)
        assert max(abs(v) for v in e.d_vals) < mpfr("1e-38")
        assert e.amp1 < mpfr("1e-38")
        # both curves equal R0(v) = (d+1)/(2b) sech^2(0) = 1
        for r in e.r_u:
            assert abs(r - 1) < mpfr("1e-30")


@pytest.fixture(scope="module")
def entry_d03():
    with CTX.active():
        sec = SectionSpec(0, 32)
        return measure_splitting(sample_conservative(), "0.09", 0, sec, CTX, jobs=2)


def test_reality_of_modes(entry_d03):
    assert entry_d03.reality_defect < mpfr("1e-30")


def test_theta_shift_covariance(entry_d03):
    # rotating all seeds rotates D_1 by a unit phase and preserves |D_1|
    with CTX.active():
        sec = SectionSpec(0, 32)
        shifted = measure_splitting(sample_conservative(), "0.09", 0, sec, CTX,
                                    jobs=2, phase_offset="0.35")
        rel = abs(shifted.amp1 - entry_d03.amp1) / entry_d03.amp1
        assert rel < mpfr("1e-6")


def test_seed_radius_independence(entry_d03):
    with CTX.active():
        sec = SectionSpec(0, 32)
        e2 = measure_splitting(sample_conservative(), "0.09", 0, sec, CTX,
                               jobs=2, seed_radius="5e-4")
        rel = abs(e2.amp1 - entry_d03.amp1) / entry_d03.amp1
        assert rel < mpfr("1e-6")


def test_grid_refinement_stability(entry_d03):
    with CTX.active():
        sec = SectionSpec(0, 64)
        e2 = measure_splitting(sample_conservative(), "0.09", 0, sec, CTX, jobs=2)
        rel = abs(e2.amp1 - entry_d03.amp1) / entry_d03.amp1
        assert rel < mpfr("1e-6")


def test_curve_deviation_is_order_delta(entry_d03):
    # r(theta) - R0(v) = O(delta): compare two deltas, slope ~ 1
    with CTX.active():
        sec = SectionSpec(0, 32)
        e2 = measure_splitting(sample_conservative(), "0.0225", 0, sec, CTX, jobs=2)
        def dev(e):
            r0 = heteroclinic(0, 0, sample_conservative(), e.delta, CTX).r
            return max(abs(r - r0) for r in e.r_u)
        d1, d2 = dev(entry_d03), dev(e2)
        import math
        slope = math.log(float(d1 / d2)) / math.log(float(entry_d03.delta / e2.delta))
        assert 0.6 < slope < 1.4


def test_section_cosh_factor():
    # amp1(v)/amp1(0) tracks cosh^(1+2/beta1)(beta1 v) modulo phase effects
    with CTX.active():
        spec = sample_conservative()
        mu = "0.0144"            # delta = 0.12
        bits = precision_for_delta(0.12)
        ctx = PrecisionCtx(bits, "1e-40", "1e-40")
        e0 = measure_splitting(spec, mu, 0, SectionSpec(0, 32), ctx, jobs=2)
        e3 = measure_splitting(spec, mu, 0, SectionSpec("0.3", 32), ctx, jobs=2)
        # scaled amplitudes: amp1 ~ cosh^{2/d}(d v); original adds cosh sqrt factor
        pred = gmpy2.cosh(mpfr("0.3")) ** 2
        ratio = e3.amp1 / e0.amp1
        assert abs(ratio / pred - 1) < mpfr("0.05")


def test_fold_detector():
    with CTX.active():
        thetas = [mpfr(k) / 8 * 2 * gmpy2.const_pi() for k in range(8)]
        _check_graph(thetas)
        bad = thetas[:]
        bad[3] = bad[2] - mpfr("0.2")   # backtrack
        with pytest.raises(FoldDetected):
            _check_graph(bad)


def test_find_nu0_conservative_returns_zero():
    with CTX.active():
        nu0, entry, n = find_nu0(zero_perturbation(), "0.04", SectionSpec(0, 32), CTX)
        assert nu0 == 0 and n == 1


def test_find_nu0_dissipative():
    with CTX.active():
        spec = sample_dissipative()
        mu = "0.0324"    # delta = 0.18
        bits = precision_for_delta(0.18)
        ctx = PrecisionCtx(bits, "1e-40", "1e-40")
        nu0, entry, nev = find_nu0(spec, mu, SectionSpec(0, 32), ctx, jobs=2)
        assert abs(entry.upsilon0_hat) <= mpfr("1e-2") * entry.amp1
        assert abs(nu0) < mpfr("0.75") * mpfr(mu)
        # robustness: doubling N_sec moves nu0 by less than the root tolerance
        nu0b, entryb, _ = find_nu0(spec, mu, SectionSpec(0, 64), ctx, jobs=2)
        assert abs(nu0b - nu0) <= mpfr("2e-2") * mpfr(mu)
