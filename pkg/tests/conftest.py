import pytest

from stokeslab.precision import PrecisionCtx
from stokeslab.samples import sample_conservative
from stokeslab.inner import InnerDomainSpec, solve_inner, UNSTABLE, STABLE

CTX = PrecisionCtx(192, "1e-40", "1e-40")

INNER_KW = dict(n_theta=8, tol="1e-24", r_max_factor=250, y_deep_factor=10,
                panel_order=16)
RHO_IN = 4.0


def _solve_pair(angle):
    spec = sample_conservative()
    with CTX.active():
        res_u = solve_inner(UNSTABLE, spec, InnerDomainSpec(0.6, RHO_IN, UNSTABLE),
                            INNER_KW["n_theta"], CTX, tol=INNER_KW["tol"],
                            r_max_factor=INNER_KW["r_max_factor"],
                            y_deep_factor=INNER_KW["y_deep_factor"],
                            panel_order=INNER_KW["panel_order"], ray_angle_deg=angle)
        res_s = solve_inner(STABLE, spec, InnerDomainSpec(0.6, RHO_IN, STABLE),
                            INNER_KW["n_theta"], CTX, tol=INNER_KW["tol"],
                            r_max_factor=INNER_KW["r_max_factor"],
                            y_deep_factor=INNER_KW["y_deep_factor"],
                            panel_order=INNER_KW["panel_order"], ray_angle_deg=angle)
    return res_u, res_s


@pytest.fixture(scope="session")
def ctx192():
    return CTX


@pytest.fixture(scope="session")
def inner_pair_main():
    """Both inner solutions of the documented conservative sample, vertical ray."""
    return _solve_pair(0)


@pytest.fixture(scope="session")
def inner_pair_angled():
    """Same sample solved on a 15-degree slanted ray (two-path oracle)."""
    return _solve_pair(15)


@pytest.fixture(scope="session")
def stokes_main(inner_pair_main):
    from stokeslab.stokes import stokes_pipeline
    spec = sample_conservative()
    with CTX.active():
        return stokes_pipeline(inner_pair_main[0], inner_pair_main[1], spec, CTX,
                               rho_in=RHO_IN)
