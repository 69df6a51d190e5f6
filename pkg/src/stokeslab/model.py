"""The Hopf-zero unfolding after the order-3 normal form, its scalings and
limit objects.

Variables follow the scaled setting throughout: delta = sqrt(mu),
sigma = nu/delta, coefficients b = gamma2, c = alpha3, d = beta1.  The scaled
Cartesian field is assembled by exact monomial recomposition, so each
degree-k monomial of the original perturbation carries delta^(k-2) (powers of
mu count twice) and the field stays polynomial in delta down to delta = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import gmpy2
from gmpy2 import mpc, mpfr

from .poly import Poly
from .precision import PrecisionCtx, C, R
from .numerics import PolynomialField

VARS5 = ("xb", "yb", "zb", "mu", "nu")


class ModelError(ValueError):
    pass


class BranchTrackingError(RuntimeError):
    pass


def _as_poly5(p) -> Poly:
    if isinstance(p, Poly):
        if p.nvars != 5:
            raise ModelError("perturbation polynomials take (xb, yb, zb, mu, nu)")
        return p
    return Poly(5, p or {})


@dataclass
class UnfoldingSpec:
    """Coefficients of the order-3 normal form plus the O3 perturbations."""

    alpha0: float | str
    beta1: float | str
    gamma2: float | str
    alpha1: float | str = 0
    alpha2: float | str = 0
    alpha3: float | str = 0
    gamma3: float | str = 0
    gamma4: float | str = 0
    gamma5: float | str = 0
    h3: float | str = 0
    fbar: Poly | dict | None = None
    gbar: Poly | dict | None = None
    hbar: Poly | dict | None = None
    conservative: bool = False
    max_degree: int = 5

    def __post_init__(self):
        self.fbar = _as_poly5(self.fbar)
        self.gbar = _as_poly5(self.gbar)
        self.hbar = _as_poly5(self.hbar)
        if R(self.alpha0) == 0:
            raise ModelError("alpha0 must be nonzero")
        if R(self.beta1) <= 0 or R(self.gamma2) <= 0:
            raise ModelError("beta1 and gamma2 must be positive")
        for name, p in (("fbar", self.fbar), ("gbar", self.gbar)):
            if p and p.min_degree() < 3:
                raise ModelError(f"{name} contains monomials of total degree < 3")
            if p and p.max_degree() > self.max_degree:
                raise ModelError(f"{name} exceeds max degree {self.max_degree}")
        quad = Poly(5, {(0, 0, 0, 2, 0): self.gamma3,
                        (0, 0, 0, 0, 2): self.gamma4,
                        (0, 0, 0, 1, 1): self.gamma5})
        rest = self.hbar - quad if self.hbar else quad * (-1)
        if rest and rest.min_degree() < 3:
            raise ModelError("hbar minus its (mu, nu)-quadratic block has degree-<3 terms")
        if self.hbar and self.hbar.max_degree() > self.max_degree:
            raise ModelError(f"hbar exceeds max degree {self.max_degree}")
        z3 = self.hbar.coeffs.get((0, 0, 3, 0, 0), mpc(0))
        if abs(z3 - C(self.h3)) > 0:
            raise ModelError(f"hbar z^3 coefficient {z3} must equal h3 = {self.h3}")
        if self.conservative:
            if R(self.beta1) != 1:
                raise ModelError("conservative flag requires beta1 = 1")
            div = self.fbar.diff(0) + self.gbar.diff(1) + self.hbar.diff(2)
            if div:
                raise ModelError(
                    "conservative flag requires divergence-free (fbar, gbar, hbar)")

    # renamed coefficients of the scaled setting
    @property
    def b(self) -> mpfr:
        return R(self.gamma2)

    @property
    def c(self) -> mpfr:
        return R(self.alpha3)

    @property
    def d(self) -> mpfr:
        return R(self.beta1)

    def alpha_of(self, delta, sigma) -> mpfr:
        return R(self.alpha0) + R(self.alpha1) * R(delta) * R(sigma) \
            + R(self.alpha2) * R(delta) ** 2

    def perturbations(self):
        return {"f": self.fbar, "g": self.gbar, "h": self.hbar}

    def canonical_dict(self) -> dict:
        from .precision import num_str
        out = {k: str(getattr(self, k)) for k in
               ("alpha0", "alpha1", "alpha2", "alpha3", "beta1", "gamma2",
                "gamma3", "gamma4", "gamma5", "h3", "conservative")}
        for name, p in self.perturbations().items():
            out[name] = sorted((k, num_str(v)) for k, v in p.coeffs.items())
        return out


@dataclass
class ScaledParams:
    mu: mpfr
    nu: mpfr
    delta: mpfr
    sigma: mpfr
    alpha: mpfr

    @classmethod
    def from_mu_nu(cls, spec: UnfoldingSpec, mu, nu, ctx: PrecisionCtx) -> "ScaledParams":
        with ctx.active():
            mu, nu = R(mu), R(nu)
            if mu <= 0:
                raise ModelError("mu must be positive")
            if abs(nu) >= spec.d * gmpy2.sqrt(mu):
                raise ModelError("|nu| must be < beta1*sqrt(mu)")
            delta = gmpy2.sqrt(mu)
            sigma = nu / delta
            return cls(mu, nu, delta, sigma, spec.alpha_of(delta, sigma))


def recomposition_weight(expo) -> int:
    """delta power carried by one original-variable monomial after scaling,
    before the global delta^-2; mu counts twice, everything else once."""
    i, j, m, p, q = expo
    return i + j + m + 2 * p + q


def _recompose(poly: Poly, delta, sigma, h3, ctx: PrecisionCtx) -> Poly:
    """delta^-2 * poly(delta x, delta y, delta (z - delta h3/2), delta^2, delta sigma)
    as an exact polynomial in the scaled variables (x, y, z)."""
    with ctx.active():
        delta, sigma = R(delta), R(sigma)
        shift = delta * R(h3) / 2
        z_sh = Poly(3, {(0, 0, 1): 1, (0, 0, 0): -shift})
        out = Poly.zero(3)
        zpow = {0: Poly(3, {(0, 0, 0): 1})}
        for expo, coef in poly.coeffs.items():
            i, j, m, p, q = expo
            w = recomposition_weight(expo) - 2
            if m not in zpow:
                acc = zpow[max(zpow)]
                for mm in range(max(zpow) + 1, m + 1):
                    acc = acc * z_sh
                    zpow[mm] = acc
            factor = coef * (delta ** w if w != 0 else 1) * (sigma ** q if q else 1)
            out = out + Poly(3, {(i, j, 0): factor}) * zpow[m]
        return out


class ScaledSystem:
    """Scaled Cartesian and polar fields at fixed (delta, sigma)."""

    def __init__(self, spec: UnfoldingSpec, params: ScaledParams, ctx: PrecisionCtx):
        self.spec = spec
        self.params = params
        self.ctx = ctx
        with ctx.active():
            d, b, c = spec.d, spec.b, spec.c
            delta, sigma = params.delta, params.sigma
            alpha = params.alpha
            h3 = R(spec.h3)
            pf = _recompose(spec.fbar, delta, sigma, h3, ctx) + Poly(
                3, {(1, 0, 0): delta * h3 * d / 2, (0, 1, 0): -delta * h3 * c / 2})
            pg = _recompose(spec.gbar, delta, sigma, h3, ctx) + Poly(
                3, {(1, 0, 0): delta * h3 * c / 2, (0, 1, 0): delta * h3 * d / 2})
            ph = _recompose(spec.hbar, delta, sigma, h3, ctx) + Poly(
                3, {(0, 0, 1): -delta * h3, (0, 0, 0): delta ** 2 * h3 ** 2 / 4})
            self.perturbation = (pf, pg, ph)
            core_x = Poly(3, {(1, 0, 0): sigma, (1, 0, 1): -d,
                              (0, 1, 0): alpha / delta, (0, 1, 1): c})
            core_y = Poly(3, {(1, 0, 0): -alpha / delta, (1, 0, 1): -c,
                              (0, 1, 0): sigma, (0, 1, 1): -d})
            core_z = Poly(3, {(0, 0, 0): -1, (2, 0, 0): b, (0, 2, 0): b, (0, 0, 2): 1})
            self.cartesian = PolynomialField([core_x + pf, core_y + pg, core_z + ph])

    def cartesian_rhs(self, state):
        with self.ctx.active():
            return self.cartesian.eval([mpc(v) for v in state])

    def polar_rhs(self, state):
        """(dr, dtheta, dz) at (r, theta, z); r > 0 required."""
        with self.ctx.active():
            r, th, z = mpc(state[0]), mpc(state[1]), mpc(state[2])
            rad = gmpy2.sqrt(2 * r)
            x, y = rad * gmpy2.cos(th), rad * gmpy2.sin(th)
            dx, dy, dz = self.cartesian.eval([x, y, z])
            return [x * dx + y * dy, (x * dy - y * dx) / (2 * r), dz]

    def unperturbed_polar_rhs(self, state):
        with self.ctx.active():
            r, _, z = (mpc(v) for v in state)
            d, b, c = self.spec.d, self.spec.b, self.spec.c
            return [-2 * d * r * z,
                    -self.params.alpha / self.params.delta - c * z,
                    -1 + 2 * b * r + z * z]


def scale_system(spec: UnfoldingSpec, mu, nu, ctx: PrecisionCtx) -> tuple[ScaledParams, ScaledSystem]:
    params = ScaledParams.from_mu_nu(spec, mu, nu, ctx)
    return params, ScaledSystem(spec, params, ctx)


def _eig3(a, ctx: PrecisionCtx):
    """Eigenvalues/vectors of a 3x3 complex matrix via the characteristic cubic."""
    import mpmath
    with ctx.active():
        tr = a[0][0] + a[1][1] + a[2][2]
        m = lambda i, j: a[i][j]
        c2 = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)
              + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)
              + m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
        det = (m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
               - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
               + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)))
    old = mpmath.mp.prec
    mpmath.mp.prec = ctx.mantissa_bits + 24
    digits = int(ctx.mantissa_bits / 3.3) + 8
    try:
        def cv(z):
            z = mpc(z)
            return mpmath.mpc(str(z.real), str(z.imag))
        coeffs = [mpmath.mpc(1), -cv(tr), cv(c2), -cv(det)]
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=80)
        roots = [(mpmath.nstr(r.real, digits), mpmath.nstr(r.imag, digits)) for r in roots]
    finally:
        mpmath.mp.prec = old
    with ctx.active():
        eigvals = [mpc(mpfr(re), mpfr(im)) for re, im in roots]
        eigvecs = []
        for lam in eigvals:
            rows = [[a[i][j] - (lam if i == j else 0) for j in range(3)] for i in range(3)]
            crosses = []
            for (r1, r2) in ((0, 1), (0, 2), (1, 2)):
                u, v = rows[r1], rows[r2]
                w = [u[1] * v[2] - u[2] * v[1],
                     u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]]
                crosses.append(w)
            w = max(crosses, key=lambda ww: abs(ww[0]) + abs(ww[1]) + abs(ww[2]))
            nrm = gmpy2.sqrt(gmpy2.norm(w[0]) + gmpy2.norm(w[1]) + gmpy2.norm(w[2]))
            if nrm == 0:
                raise ModelError("eigenvalue collision: defective Jacobian")
            eigvecs.append([wi / nrm for wi in w])
        return eigvals, eigvecs


@dataclass
class Equilibrium:
    point: list
    eigvals: list
    eigvecs: list
    residual: mpfr

    @property
    def real_eig_index(self) -> int:
        return min(range(3), key=lambda i: abs(self.eigvals[i].imag))

    @property
    def pair_indices(self) -> tuple[int, int]:
        i0 = self.real_eig_index
        return tuple(i for i in range(3) if i != i0)


def critical_points(system: ScaledSystem, ctx: PrecisionCtx,
                    max_iter: int = 50) -> tuple[Equilibrium, Equilibrium]:
    """Newton refinement of S-/S+ from (0,0,-1)/(0,0,+1) plus eigenstructure."""
    out = []
    with ctx.active():
        fld = system.cartesian
        for sgn in (-1, 1):
            y = [mpc(0), mpc(0), mpc(sgn)]
            converged = False
            for _ in range(max_iter):
                fv = fld.eval(y)
                jac = fld.jacobian(y)
                step = _solve3(jac, [-v for v in fv])
                lam = mpfr(1)
                res0 = max(abs(v) for v in fv)
                for _ in range(8):
                    cand = [yi + lam * si for yi, si in zip(y, step)]
                    if max(abs(v) for v in fld.eval(cand)) < res0 or res0 == 0:
                        break
                    lam /= 2
                y = [yi + lam * si for yi, si in zip(y, step)]
                res = max(abs(v) for v in fld.eval(y))
                if res <= ctx.rtol and max(abs(s) * lam for s in step) <= ctx.rtol:
                    converged = True
                    break
            if not converged:
                raise ModelError(f"Newton for critical point near (0,0,{sgn}) did not converge")
            eigvals, eigvecs = _eig3(fld.jacobian(y), ctx)
            imags = sorted(abs(v.imag) for v in eigvals)
            if imags[2] == 0 or imags[1] == 0:
                raise ModelError("eigenstructure is not saddle-focus: complex pair absent")
            eq = Equilibrium(y, eigvals, eigvecs, max(abs(v) for v in fld.eval(y)))
            lam_r = eigvals[eq.real_eig_index]
            pr = eigvals[eq.pair_indices[0]]
            if (lam_r.real * pr.real).real >= 0:
                raise ModelError("eigenstructure is not saddle-focus: no opposite-sign pair")
            out.append(eq)
    return out[0], out[1]


def _solve3(a, b):
    """3x3 linear solve with partial pivoting."""
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(3):
        piv = max(range(col, 3), key=lambda r: abs(m[r][col]))
        if abs(m[piv][col]) == 0:
            raise ModelError("singular Jacobian in Newton step")
        m[col], m[piv] = m[piv], m[col]
        d = m[col][col]
        m[col] = [v / d for v in m[col]]
        for r in range(3):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [vr - f * vc for vr, vc in zip(m[r], m[col])]
    return [m[i][3] for i in range(3)]


@dataclass
class HeteroclinicPoint:
    t: mpc
    r: mpc
    theta: mpc
    z: mpc


def heteroclinic(t, theta0, spec: UnfoldingSpec, delta, ctx: PrecisionCtx) -> HeteroclinicPoint:
    """Point of the unperturbed heteroclinic surface at complex time t."""
    with ctx.active():
        t = mpc(t)
        d, b, c = spec.d, spec.b, spec.c
        ch = gmpy2.cosh(d * t)
        if abs(ch) < mpfr("1e-12"):
            raise ModelError(f"heteroclinic evaluated at a singularity of sech (t={t})")
        r = (d + 1) / (2 * b) / (ch * ch)
        alpha = spec.alpha_of(delta, 0)
        theta = mpc(theta0) - (alpha / R(delta)) * t - (c / d) * gmpy2.log(ch)
        z = gmpy2.tanh(d * t)
        return HeteroclinicPoint(t, r, theta, z)


class InnerNonlinearity:
    """Evaluator for (F_hat, G_hat, H_hat)(psi, s, theta, delta, sigma).

    The five-variable perturbations are collapsed, at fixed (delta, sigma),
    to trivariate polynomials in the arguments (X, Y, Z) = (rho cos theta,
    rho sin theta, 1/s); the h3 shift and the mu/nu substitutions are folded
    into the coefficients, so evaluation is exact at delta = 0 as well.
    """

    def __init__(self, spec: UnfoldingSpec, ctx: PrecisionCtx):
        self.spec = spec
        self.ctx = ctx
        self._cache: dict = {}

    def at(self, delta, sigma) -> "FGHEval":
        with self.ctx.active():
            key = (str(R(delta)), str(R(sigma)))
            ev = self._cache.get(key)
            if ev is None:
                ev = FGHEval(self.spec, R(delta), R(sigma), self.ctx)
                self._cache[key] = ev
            return ev


def _collapse5(poly: Poly, delta, sigma, h3, ctx: PrecisionCtx) -> Poly:
    """poly(X, Y, Z - delta^2 h3/2, delta^2, delta sigma) as Poly in (X, Y, Z)."""
    with ctx.active():
        sh = delta * delta * R(h3) / 2
        z_sh = Poly(3, {(0, 0, 1): 1, (0, 0, 0): -sh})
        zpow = {0: Poly(3, {(0, 0, 0): 1})}
        out = Poly.zero(3)
        for expo, coef in poly.coeffs.items():
            i, j, m, p, q = expo
            if m not in zpow:
                acc = zpow[max(zpow)]
                for mm in range(max(zpow) + 1, m + 1):
                    acc = acc * z_sh
                    zpow[mm] = acc
            factor = coef * (delta ** (2 * p) if p else 1) * ((delta * sigma) ** q if q else 1)
            out = out + Poly(3, {(i, j, 0): factor}) * zpow[m]
        return out


class FGHEval:
    def __init__(self, spec: UnfoldingSpec, delta, sigma, ctx: PrecisionCtx):
        self.spec = spec
        self.ctx = ctx
        with ctx.active():
            self.delta, self.sigma = R(delta), R(sigma)
            d, c = spec.d, spec.c
            h3 = R(spec.h3)
            d2 = self.delta ** 2
            shift_f = Poly(3, {(1, 0, 0): d2 * h3 * d / 2, (0, 1, 0): -d2 * h3 * c / 2})
            shift_g = Poly(3, {(1, 0, 0): d2 * h3 * c / 2, (0, 1, 0): d2 * h3 * d / 2})
            shift_h = Poly(3, {(0, 0, 1): -d2 * h3, (0, 0, 0): d2 ** 2 * h3 ** 2 / 4})
            self.f3 = _collapse5(spec.fbar, self.delta, self.sigma, h3, ctx) + shift_f
            self.g3 = _collapse5(spec.gbar, self.delta, self.sigma, h3, ctx) + shift_g
            self.h3p = _collapse5(spec.hbar, self.delta, self.sigma, h3, ctx) + shift_h
            self.fX, self.fY = self.f3.diff(0), self.f3.diff(1)
            self.gX, self.gY = self.g3.diff(0), self.g3.diff(1)
            self.hX, self.hY = self.h3p.diff(0), self.h3p.diff(1)
            self._f = self.f3.compiled3()
            self._g = self.g3.compiled3()
            self._h = self.h3p.compiled3()
            self._fX, self._fY = self.fX.compiled3(), self.fY.compiled3()
            self._gX, self._gY = self.gX.compiled3(), self.gY.compiled3()
            self._hX, self._hY = self.hX.compiled3(), self.hY.compiled3()
            self.rho_pref = -C(0, 1) * gmpy2.sqrt((spec.d + 1) / spec.b)

    def rho(self, psi, s) -> mpc:
        """Analytic continuation of delta*sqrt(2r) pinned to the heteroclinic
        branch; the principal square root acts only on a quantity near 1."""
        with self.ctx.active():
            s = mpc(s)
            rad = 1 - (self.delta * s) ** 2 - 2 * self.spec.b * s * s * mpc(psi) / (self.spec.d + 1)
            if rad == 0:
                raise BranchTrackingError("rho = 0 on path: branch tracking impossible")
            if rad.real < 0 and abs(gmpy2.phase(rad)) > 3 * gmpy2.const_pi() / 4:
                raise BranchTrackingError(
                    f"rho radicand {rad} left the principal-branch safe sector")
            return self.rho_pref / s * gmpy2.sqrt(rad)

    def fgh_point(self, psi, s, cos_t, sin_t):
        """(F_hat, G_hat, H_hat) at one (s, theta) sample."""
        with self.ctx.active():
            rho = self.rho(psi, s)
            X, Y, Z = rho * cos_t, rho * sin_t, 1 / mpc(s)
            fv, gv, hv = self._f(X, Y, Z), self._g(X, Y, Z), self._h(X, Y, Z)
            fhat = rho * (cos_t * fv + sin_t * gv)
            ghat = (cos_t * gv - sin_t * fv) / rho
            hhat = hv
            return fhat, ghat, hhat

    def fgh_dpsi_point(self, psi, s, cos_t, sin_t):
        """Partial derivatives of (F_hat, G_hat, H_hat) with respect to psi."""
        with self.ctx.active():
            rho = self.rho(psi, s)
            X, Y, Z = rho * cos_t, rho * sin_t, 1 / mpc(s)
            fv, gv = self._f(X, Y, Z), self._g(X, Y, Z)
            fX, fY = self._fX(X, Y, Z), self._fY(X, Y, Z)
            gX, gY = self._gX(X, Y, Z), self._gY(X, Y, Z)
            hX, hY = self._hX(X, Y, Z), self._hY(X, Y, Z)
            radial_f = cos_t * (fX * cos_t + fY * sin_t) + sin_t * (gX * cos_t + gY * sin_t)
            radial_g = cos_t * (gX * cos_t + gY * sin_t) - sin_t * (fX * cos_t + fY * sin_t)
            dF = (cos_t * fv + sin_t * gv) / rho + radial_f
            dG = -(cos_t * gv - sin_t * fv) / rho ** 3 + radial_g / rho ** 2
            dH = (hX * cos_t + hY * sin_t) / rho
            return dF, dG, dH
