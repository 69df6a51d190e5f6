import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from stokeslab.precision import PrecisionCtx, PrecisionError
from stokeslab.poly import Poly
from stokeslab.numerics import (PolynomialField, integrate_ivp, quadrature_path,
                                extrapolate_limit, ExtrapolationError, QuadratureError,
                                kernel_moments, gauss_legendre, EventNotFound)

CTX = PrecisionCtx(192, "1e-40", "1e-40")


def test_precision_ctx_invariants():
    with pytest.raises(PrecisionError):
        PrecisionCtx(32)
    with pytest.raises(PrecisionError):
        PrecisionCtx(192, "-1e-3", "1e-3")
    with pytest.raises(PrecisionError):
        PrecisionCtx(64, "1e-40", "1e-40")   # below representable floor
    ctx = PrecisionCtx(192, "1e-30", "1e-30")
    assert ctx.mantissa_bits == 192


def exp_field():
    return PolynomialField([Poly.monomial(1, (1,))])


def test_integrate_exponential():
    with CTX.active():
        tr = integrate_ivp(exp_field(), [1], (0, 1), CTX)
        assert abs(tr.y_end[0] - gmpy2.exp(mpfr(1))) < mpfr("1e-40")


def test_integrate_riccati():
    # y' = -y^2, y0 = 1 on [0,3]: closed form 1/(1+t) -> 1/4
    with CTX.active():
        f = PolynomialField([Poly.monomial(1, (2,), -1)])
        tr = integrate_ivp(f, [1], (0, 3), CTX)
        assert abs(tr.y_end[0] - mpfr(1) / 4) < mpfr("1e-40")


def test_integrate_heteroclinic_polar():
    # unperturbed polar system integrated from the closed-form heteroclinic
    from stokeslab.samples import zero_perturbation
    from stokeslab.model import heteroclinic, scale_system
    with CTX.active():
        spec = zero_perturbation()
        params, system = scale_system(spec, "0.04", 0, CTX)
        delta = params.delta
        h0 = heteroclinic(-2, "0.3", spec, delta, CTX)
        field = PolynomialField([
            Poly(3, {(1, 0, 1): -2 * spec.d}),
            Poly(3, {(0, 0, 0): -params.alpha / delta, (0, 0, 1): -spec.c}),
            Poly(3, {(0, 0, 0): -1, (1, 0, 0): 2 * spec.b, (0, 0, 2): 1}),
        ])
        tr = integrate_ivp(field, [h0.r, h0.theta, h0.z], (-2, 2), CTX)
        h1 = heteroclinic(2, "0.3", spec, delta, CTX)
        for got, want in zip(tr.y_end, (h1.r, h1.theta, h1.z)):
            assert abs(got - want) < mpfr("1e-38")


def test_integrator_convergence_order():
    # halving tolerances must reduce the endpoint error at least linearly in tol
    errs = []
    for tol in ("1e-12", "1e-24"):
        ctx = PrecisionCtx(192, tol, tol)
        with ctx.active():
            f = PolynomialField([Poly.monomial(1, (2,), -1)])
            tr = integrate_ivp(f, [1], (0, 3), ctx, order=12)
            errs.append(abs(tr.y_end[0] - mpfr(1) / 4))
    assert errs[1] < errs[0] / 1e6 or errs[1] < mpfr("1e-24")


def test_event_detection():
    with CTX.active():
        f = PolynomialField([Poly.monomial(1, (1,))])  # y' = y
        tr = integrate_ivp(f, [1], (0, 3), CTX, event=(0, 2.0, +1))
        t_ev, y_ev = tr.events[0]
        assert abs(t_ev - gmpy2.log(mpfr(2))) < mpfr("1e-38")
        assert abs(y_ev[0] - 2) < mpfr("1e-38")
        with pytest.raises(EventNotFound):
            integrate_ivp(f, [1], (0, 0.5), CTX, event=(0, 2.0, +1))


def test_quadrature_tail_closed_form():
    with CTX.active():
        s = mpc(-3, -2)
        val = quadrature_path(lambda w: w ** -6, [s], CTX, decay_order=6, tail_dir=mpc(-1))
        assert abs(val - (-s ** -5 / 5)) < mpfr("1e-45")


def test_quadrature_segment_closed_form():
    with CTX.active():
        pi = gmpy2.const_pi()
        val = quadrature_path(lambda w: gmpy2.exp(mpc(0, 1) * w), [mpc(0), mpc(pi)], CTX)
        assert abs(val - mpc(0, 2)) < mpfr("1e-50")


def test_quadrature_tail_divergence_guard():
    with CTX.active():
        with pytest.raises(QuadratureError):
            quadrature_path(lambda w: w ** -1, [mpc(-3, -2)], CTX,
                            decay_order=1, tail_dir=mpc(-1))


def test_quadrature_path_independence():
    # analytic f, two homotopic paths with the same endpoints
    with CTX.active():
        f = lambda w: gmpy2.exp(mpc(0, 1) * w) / (w + mpc(0, 8)) ** 2
        a, b = mpc(-4, -1), mpc(3, -2)
        v1 = quadrature_path(f, [a, b], CTX)
        v2 = quadrature_path(f, [a, mpc(-1, -5), b], CTX)
        assert abs(v1 - v2) < 10 * CTX.rtol * abs(v1)


def test_quadrature_precision_monotonicity():
    vals = []
    for bits in (192, 256):
        ctx = PrecisionCtx(bits, "1e-40", "1e-40")
        with ctx.active():
            vals.append(quadrature_path(lambda w: w ** -6, [mpc(-3, -2)], ctx,
                                        decay_order=6, tail_dir=mpc(-1)))
    with CTX.active():
        assert abs(vals[0] - vals[1]) < mpfr("1e-40")


def test_extrapolate_linear_exact():
    with CTX.active():
        samples = [(mpfr(x), 2 + 5 * mpfr(x)) for x in ("0.1", "0.05", "0.025")]
        lim, ind = extrapolate_limit(samples, 1, CTX)
        assert abs(lim - 2) < mpfr("1e-50")


def test_extrapolate_quadratic_exact():
    with CTX.active():
        samples = [(mpfr(x), 1 + mpfr(x) ** 2) for x in ("0.2", "0.1", "0.05")]
        lim, ind = extrapolate_limit(samples, 2, CTX)
        assert abs(lim - 1) < mpfr("1e-50")


def test_extrapolate_errors():
    with CTX.active():
        with pytest.raises(ExtrapolationError):
            extrapolate_limit([(mpfr("0.1"), 1), (mpfr("0.05"), 1)], 1, CTX)
        with pytest.raises(ExtrapolationError):
            extrapolate_limit([(mpfr("0.1"), 1), (mpfr("0.2"), 1), (mpfr("0.05"), 1)], 1, CTX)


def test_extrapolate_indicator_shrinks_with_depth():
    # deeper rays (smaller x) must shrink the error indicator for a generic
    # v(x) = c0 + c1 x + c2 x^2 sampled with p = 1
    with CTX.active():
        def v(x):
            return 3 + mpfr("0.7") * x + mpfr("0.2") * x * x + mpfr("0.05") * x ** 3
        shallow = [(mpfr(1) / k, v(mpfr(1) / k)) for k in (2, 3, 4, 5)]
        deep = [(mpfr(1) / k, v(mpfr(1) / k)) for k in (4, 6, 8, 10)]
        _, i1 = extrapolate_limit(shallow, 1, CTX)
        _, i2 = extrapolate_limit(deep, 1, CTX)
        assert i2 < i1


def test_kernel_moments_against_quadrature():
    # independent oracle: adaptive quadrature of xi^k e^{mu xi} on [-1, 1]
    with CTX.active():
        for mu in (mpc(0), mpc(mpfr("0.7"), mpfr("-1.3")), mpc(0, -19), mpc(31, 4)):
            mom = kernel_moments(mu, 6, CTX)
            for k in range(6):
                direct = quadrature_path(lambda w, k=k, mu=mu: w ** k * gmpy2.exp(mu * w),
                                         [mpc(-1), mpc(1)], CTX)
                assert abs(mom[k] - direct) < mpfr("1e-40") * (1 + abs(direct))


def test_gauss_legendre_exactness():
    with CTX.active():
        xs, ws = gauss_legendre(12, CTX)
        # integrates degree-23 polynomials exactly
        val = sum(w * x ** 22 for x, w in zip(xs, ws))
        assert abs(val - mpfr(2) / 23) < mpfr("1e-50")
