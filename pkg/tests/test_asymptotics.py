import gmpy2
import pytest
from gmpy2 import mpc, mpfr

from stokeslab.precision import PrecisionCtx
from stokeslab.samples import sample_conservative, zero_perturbation
from stokeslab.stokes import StokesData
from stokeslab.asymptotics import (FitError, PredictedLaw, amp1_to_original,
                                   fit_exponential_law, predicted_amplitude,
                                   predicted_distance, scaled_amp1_prediction,
                                   theta_bar, upsilon0_coeffs)

CTX = PrecisionCtx(192, "1e-40", "1e-40")


def _fake_stokes(ups_m1, l0=0):
    return StokesData(a0=mpc(l0), L0=mpc(l0), L0_indicator=mpfr(0),
                      upsilon_in={-1: mpc(ups_m1)}, upsilon_ind={-1: mpfr(0)},
                      onesided_ratio=mpfr(0), c_star_abs=abs(mpc(ups_m1)) * 2,
                      c_star=2 * mpc(ups_m1) * mpc(0, -1) ** 2, phase_fitted=False)


def test_theta_bar_trivial():
    spec = zero_perturbation()
    with CTX.active():
        # v=0, alpha3=0, L0=0: zero for all mu
        assert theta_bar(0, "0.04", spec, 0, CTX) == 0
        # v=0 general: -(alpha3 + alpha0 L0)/(2 beta1) log mu
        val = theta_bar(0, "0.04", spec, "0.5", CTX)
        want = -mpfr("0.5") / 2 * gmpy2.log(mpfr("0.04"))
        assert abs(val - want) < mpfr("1e-50")


def test_theta_bar_parity():
    spec = sample_conservative()
    with CTX.active():
        v, mu = mpfr("0.4"), mpfr("0.04")
        tb_p = theta_bar(v, mu, spec, "0.3", CTX)
        tb_m = theta_bar(-v, mu, spec, "0.3", CTX)
        want = 2 * R_a0(spec) * v / gmpy2.sqrt(mu)
        assert abs((tb_p - tb_m) - want) < mpfr("1e-45")


def R_a0(spec):
    from stokeslab.precision import R
    return R(spec.alpha0)


def test_upsilon0_conjugacy_and_ordering():
    spec = zero_perturbation()
    with CTX.active():
        sd = _fake_stokes(mpc(mpfr("0.3"), mpfr("0.2")))
        sd.upsilon_in[-2] = mpc(mpfr("0.1"), mpfr("-0.4"))
        out = upsilon0_coeffs(sd, "0.1", spec, CTX, l_plus=0)
        assert out[1] == out[-1].conjugate()
        assert out[2] == out[-2].conjugate()
        # e^{l alpha pi/(2 d delta)} ordering: mode -2 far below mode -1
        assert abs(out[-2]) / abs(out[-1]) < mpfr("1e-3")


def test_upsilon0_numeric_example():
    # d=1, delta=0.1, c=L0=L+=0, Ups^[-1]=1: Ups0^[-1] = -1e4 e^{-5 pi}
    spec = zero_perturbation()
    with CTX.active():
        sd = _fake_stokes(mpc(1))
        out = upsilon0_coeffs(sd, "0.1", spec, CTX, l_plus=0)
        pi = gmpy2.const_pi()
        want = -mpfr(10) ** 4 * gmpy2.exp(-5 * pi)
        assert abs(out[-1] - want) < mpfr("1e-40")
        assert abs(out[-1] + mpfr("1.507e-3")) < mpfr("2e-6")


def test_predicted_distance_examples():
    spec = sample_conservative()
    with CTX.active():
        law = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(0)), CTX)
        assert predicted_distance(0, 1, "0.04", law, spec, CTX) == 0
        law2 = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("0.25"))), CTX)
        # v=0: amplitude = sqrt(gamma2/2) delta^-3 e^{-alpha0 pi/(2 delta)} |C*|
        amp = predicted_amplitude(0, "0.04", law2, spec, CTX)
        delta = mpfr("0.2")
        want = gmpy2.sqrt(mpfr("0.5")) * delta ** -3 \
            * gmpy2.exp(-gmpy2.const_pi() / (2 * delta)) * law2.c_star_abs
        assert abs(amp - want) < mpfr("1e-40")


def test_bracket_identity():
    # C1 cos(phi) + C2 sin(phi) = Re(conj(C*) e^{i phi})
    with CTX.active():
        c = mpc(mpfr("0.3"), mpfr("-0.7"))
        for k in range(8):
            phi = mpfr(k) / 3
            lhs = c.real * gmpy2.cos(phi) + c.imag * gmpy2.sin(phi)
            rhs = (c.conjugate() * gmpy2.exp(mpc(0, 1) * phi)).real
            assert abs(lhs - rhs) < mpfr("1e-55")


class _Entry:
    def __init__(self, delta, amp1, v=0, dhat1=None, err=None):
        self.delta = mpfr(delta)
        self.mu = self.delta ** 2
        self.v = mpfr(v)
        self.amp1 = mpfr(amp1)
        self.err_bar = err if err is not None else self.amp1 * mpfr("1e-12")
        self.dhat = {1: dhat1 if dhat1 is not None else mpc(self.amp1 / 2)}


def _synthetic_entries(spec, law, deltas):
    out = []
    with CTX.active():
        for d in deltas:
            amp_scaled = scaled_amp1_prediction(0, d, law, spec, CTX)
            out.append(_Entry(d, amp_scaled))
    return out


def test_fit_recovers_synthetic_law():
    spec = sample_conservative()
    with CTX.active():
        law = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("0.25"))), CTX)
        entries = _synthetic_entries(spec, law, ["0.2", "0.14", "0.11", "0.09", "0.07"])
        rep = fit_exponential_law(entries, law, spec, CTX)
        assert rep.rate_rel_err < mpfr("1e-8")
        assert rep.power_rel_err < mpfr("1e-8")
        assert rep.ratio_band_A < mpfr("1e-8")


def test_fit_requires_four_points_and_span():
    spec = sample_conservative()
    with CTX.active():
        law = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("0.25"))), CTX)
        with pytest.raises(FitError):
            fit_exponential_law(_synthetic_entries(spec, law, ["0.2", "0.14", "0.11"]),
                                law, spec, CTX)
        with pytest.raises(FitError):
            fit_exponential_law(_synthetic_entries(spec, law,
                                                   ["0.2", "0.19", "0.18", "0.17"]),
                                law, spec, CTX)


def test_fit_snr_precondition():
    spec = sample_conservative()
    with CTX.active():
        law = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("0.25"))), CTX)
        entries = _synthetic_entries(spec, law, ["0.2", "0.14", "0.11", "0.09"])
        entries[0].err_bar = entries[0].amp1    # SNR 1 < 10
        with pytest.raises(FitError):
            fit_exponential_law(entries, law, spec, CTX)


def test_predicted_distance_covariance():
    # odd under C* -> -C*; theta-shift moves the bracket phase only
    spec = sample_conservative()
    with CTX.active():
        law_p = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("0.25"))), CTX)
        law_m = PredictedLaw.from_stokes(spec, _fake_stokes(mpc(mpfr("-0.25"))), CTX)
        v, th, mu = mpfr("0.2"), mpfr("1.1"), mpfr("0.04")
        assert abs(predicted_distance(v, th, mu, law_p, spec, CTX)
                   + predicted_distance(v, th, mu, law_m, spec, CTX)) < mpfr("1e-40")


def test_amp1_to_original_factor():
    spec = sample_conservative()
    with CTX.active():
        # delta cosh(d v) sqrt(b/(d+1)): at v=0, b=d=1 the factor is delta/sqrt(2)
        got = amp1_to_original(1, 0, "0.1", spec, CTX)
        assert abs(got - mpfr("0.1") / gmpy2.sqrt(mpfr(2))) < mpfr("1e-50")
