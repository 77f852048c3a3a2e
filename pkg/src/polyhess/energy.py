"""Energy functional, residuals, truncation, radial minorant, and geometry witnesses.

Sign conventions.  With k the Hessian order and alpha the polyharmonic order,
the action evaluated here is

    J[u] = quadratic - datum - nonlinear,

    quadratic = 1/2 * int |half_order(u, alpha)|^2
    datum     = lambda * int f u
    nonlinear = (-1)^k/(k+1) * int u S_k[u]                  (pointwise form)
              = -(-1)^k/((k+1)k) * sum_ij int u_i u_j S_k^ij  (divergence form)

so the ``nonlinear_term`` reported for either form always enters J with a
minus sign.  In the continuum the two nonlinear terms agree after
integration by parts; discretely they differ by O(h^2), tracked by
refinement tests rather than eliminated.

The strong residual is the pointwise Euler-Lagrange field

    (-1)^alpha Delta^alpha u - (-1)^k S_k[u] - lambda f,

whose zeros are discrete solutions of the clamped boundary value problem.
The weak residual is the Riesz representative (w.r.t. the plain grid inner
product) of the divergence-form first-variation pairing; pairing and
representative agree to roundoff by construction.

Neither residual is the exact gradient of the corresponding discrete energy:
the discrete divergence structure of S_k holds only to O(h^2).  Directional-
derivative consistency is therefore asserted at a 1e-4 relative tolerance on
smooth moderate-amplitude fields, not to roundoff.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import CapabilityError, FitError, GeometryError
from .exponents import ProblemParams, alpha_main, alpha_weak
from .grid import (
    ScalarField,
    bump_field,
    gradient_centered,
    hessian,
    half_order,
    inner,
    invert_polyharmonic,
    polyharmonic,
    random_smooth_field,
    seminorm,
    sk_field,
    zeros,
)
from .hessian_algebra import sk_partials_stack


class Form(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class EnergySetting:
    """Everything needed to evaluate the action and its residuals.

    ``alpha`` must match the regime formula for the chosen form unless
    ``alpha_overridden`` is set; the flag is recorded so runs stay auditable.
    """

    params: ProblemParams
    alpha: int
    lam: float
    f: ScalarField
    form: Form = Form.STRONG
    alpha_overridden: bool = False

    def __post_init__(self):
        if self.alpha < 2:
            raise ValueError(f"alpha={self.alpha} violates the sharp bound alpha >= 2")
        expected = alpha_weak(self.params) if self.form is Form.WEAK else alpha_main(self.params)
        if not self.alpha_overridden and self.alpha != expected:
            raise ValueError(
                f"alpha={self.alpha} differs from the regime formula value {expected}; "
                "pass alpha_overridden=True to keep it"
            )

    def validate_grid(self):
        if self.params.N != self.f.domain.dim:
            raise CapabilityError(
                f"problem dimension N={self.params.N} has no grid support "
                f"(datum lives on a {self.f.domain.dim}-D box; boxes exist for dim 2 and 3 only)"
            )

    def check_field(self, u: ScalarField):
        self.validate_grid()
        if u.domain != self.f.domain:
            raise ValueError("field and datum live on different domains")


@dataclass(frozen=True)
class EnergyReport:
    J: float
    quadratic_term: float
    datum_term: float
    nonlinear_term: float
    seminorm: float
    form: str

    def to_json_dict(self) -> dict:
        return {
            "J": self.J,
            "quadratic_term": self.quadratic_term,
            "datum_term": self.datum_term,
            "nonlinear_term": self.nonlinear_term,
            "seminorm": self.seminorm,
            "form": self.form,
        }


def _sign_k(k: int) -> float:
    return -1.0 if k % 2 else 1.0


def _quadratic_term(u: ScalarField, s: EnergySetting) -> float:
    comps = half_order(u, s.alpha).components
    return 0.5 * u.domain.cell_volume * float(np.vdot(comps, comps))


def _datum_term(u: ScalarField, s: EnergySetting) -> float:
    return s.lam * inner(s.f, u)


def _nonlinear_strong(u: ScalarField, s: EnergySetting) -> float:
    k = s.params.k
    return _sign_k(k) / (k + 1) * inner(u, sk_field(u, k))


def _nonlinear_weak(u: ScalarField, s: EnergySetting) -> float:
    k = s.params.k
    grads = np.moveaxis(gradient_centered(u), 0, -1)  # nodes + (dim,)
    partials = sk_partials_stack(hessian(u).values, k)  # nodes + (dim, dim)
    density = np.einsum("...ab,...a,...b->...", partials, grads, grads)
    divergence_sum = u.domain.cell_volume * float(density.sum())
    return -_sign_k(k) / ((k + 1) * k) * divergence_sum


def _nonlinear_term(u: ScalarField, s: EnergySetting) -> float:
    if s.form is Form.WEAK:
        return _nonlinear_weak(u, s)
    return _nonlinear_strong(u, s)


def evaluate_J(u: ScalarField, s: EnergySetting) -> float:
    """Pointwise-form action value."""
    s.check_field(u)
    return _quadratic_term(u, s) - _datum_term(u, s) - _nonlinear_strong(u, s)


def evaluate_J_weak(u: ScalarField, s: EnergySetting) -> float:
    """Divergence-form action value (agrees with evaluate_J up to O(h^2))."""
    s.check_field(u)
    return _quadratic_term(u, s) - _datum_term(u, s) - _nonlinear_weak(u, s)


def energy_report(u: ScalarField, s: EnergySetting) -> EnergyReport:
    s.check_field(u)
    quad = _quadratic_term(u, s)
    datum = _datum_term(u, s)
    nl = _nonlinear_term(u, s)
    return EnergyReport(
        J=quad - datum - nl,
        quadratic_term=quad,
        datum_term=datum,
        nonlinear_term=nl,
        seminorm=seminorm(u, s.alpha),
        form=s.form.value,
    )


def residual_strong(u: ScalarField, s: EnergySetting) -> ScalarField:
    """(-1)^alpha Delta^alpha u - (-1)^k S_k[u] - lambda f."""
    s.check_field(u)
    k = s.params.k
    sign_a = -1.0 if s.alpha % 2 else 1.0
    vals = (
        sign_a * polyharmonic(u, s.alpha).values
        - _sign_k(k) * sk_field(u, k).values
        - s.lam * s.f.values
    )
    return ScalarField(u.domain, vals, 0)


def _weak_flux(u: ScalarField, s: EnergySetting) -> np.ndarray:
    """Components F_i = sum_j u_{x_j} S_k^{ij}[u], shape (dim,) + nodes."""
    k = s.params.k
    grads = gradient_centered(u)  # (dim,) + nodes
    partials = sk_partials_stack(hessian(u).values, k)  # nodes + (dim, dim)
    gt = np.moveaxis(grads, 0, -1)
    flux = np.einsum("...ij,...j->...i", partials, gt)
    return np.moveaxis(flux, -1, 0)


def residual_weak_pairing(u: ScalarField, w: ScalarField, s: EnergySetting) -> float:
    """First-variation pairing of the divergence-form action against a test field."""
    s.check_field(u)
    s.check_field(w)
    k = s.params.k
    sign_a = -1.0 if s.alpha % 2 else 1.0
    linear = (
        sign_a * polyharmonic(u, s.alpha).values - s.lam * s.f.values
    )
    flux = _weak_flux(u, s)
    grads_w = gradient_centered(w)
    vol = u.domain.cell_volume
    return float(
        vol * (np.vdot(linear, w.values) + _sign_k(k) / k * np.vdot(flux, grads_w))
    )


def residual_weak_field(u: ScalarField, s: EnergySetting) -> ScalarField:
    """Riesz representative g of the weak pairing: integrate(g*w) == pairing(u, w).

    Uses the exact skew-adjointness of the centered first difference under
    zero extension, so the identity with the pairing holds to roundoff.
    """
    s.check_field(u)
    k = s.params.k
    sign_a = -1.0 if s.alpha % 2 else 1.0
    flux = _weak_flux(u, s)
    div = np.zeros(u.domain.nodes)
    for a in range(u.domain.dim):
        comp = ScalarField(u.domain, flux[a], 1)
        div += gradient_centered(comp)[a]
    vals = (
        sign_a * polyharmonic(u, s.alpha).values
        - _sign_k(k) / k * div
        - s.lam * s.f.values
    )
    return ScalarField(u.domain, vals, 0)


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff profile: 1 on [0, R0], 0 on [R1, inf), monotone between."""

    R0: float
    R1: float
    profile: object  # Callable[[float], float]

    def __post_init__(self):
        if not 0.0 < self.R0 < self.R1:
            raise ValueError(f"need 0 < R0 < R1, got R0={self.R0}, R1={self.R1}")
        rs = np.linspace(0.0, 1.5 * self.R1, 64)
        vals = np.array([self.profile(r) for r in rs])
        if np.any(vals < -1e-12) or np.any(vals > 1.0 + 1e-12):
            raise ValueError("cutoff profile leaves [0, 1]")
        if np.any(np.diff(vals) > 1e-12):
            raise ValueError("cutoff profile is not nonincreasing")

    @classmethod
    def quintic(cls, R0: float, R1: float) -> "CutoffSpec":
        """Quintic smoothstep transition (C^2, monotone) rescaled to [R0, R1]."""

        def profile(r: float, _r0=float(R0), _r1=float(R1)) -> float:
            x = (r - _r0) / (_r1 - _r0)
            x = min(max(x, 0.0), 1.0)
            return 1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x))

        return cls(float(R0), float(R1), profile)


def evaluate_H(u: ScalarField, s: EnergySetting, c: CutoffSpec) -> float:
    """Truncated action: quadratic and datum terms kept, nonlinear term scaled
    by the cutoff of the seminorm.  Coincides with the action inside the R0 ball."""
    s.check_field(u)
    quad = _quadratic_term(u, s)
    datum = _datum_term(u, s)
    r = seminorm(u, s.alpha)
    theta = c.profile(r)
    if r <= c.R0:
        theta = 1.0
    elif r >= c.R1:
        theta = 0.0
    return quad - datum - theta * _nonlinear_term(u, s)


@dataclass(frozen=True)
class MinorantCoefficients:
    """Constants of the radial lower bound h(R) = R^2/2 - C1 R - C2 R^(k+1)."""

    C1: float
    C2: float
    k: int

    def __post_init__(self):
        if self.C1 <= 0 or self.C2 <= 0:
            raise ValueError("minorant constants must be positive")
        if self.k < 2:
            raise ValueError("k must be >= 2")


def radial_minorant(R: float, m: MinorantCoefficients) -> float:
    if R < 0:
        raise ValueError("R must be nonnegative")
    return 0.5 * R * R - m.C1 * R - m.C2 * R ** (m.k + 1)


@dataclass(frozen=True)
class MinorantGeometry:
    """Radii extracted from the minorant: lower zero R0, cutoff edge R1,
    maximizer R_M, and the positive maximum value."""

    R0: float
    R1: float
    R_M: float
    h_max: float


def _bisect(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = fn(lo)
    if flo == 0.0:
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0.0 or hi - lo < tol * max(1.0, abs(mid)):
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def minorant_geometry(m: MinorantCoefficients) -> MinorantGeometry:
    """Roots and maximizer of the fitted minorant; raises when the positive
    hump does not exist (the smallness condition on lambda fails)."""
    k = m.k
    c = (k + 1) * m.C2

    def h(r):
        return radial_minorant(r, m)

    def dh(r):
        return r - m.C1 - c * r**k

    r_peak = (1.0 / (c * k)) ** (1.0 / (k - 1))  # argmax of dh
    if dh(r_peak) <= 0.0:
        raise GeometryError(
            "fitted minorant has no positive hump (h' <= 0 everywhere); reduce lambda"
        )
    r1 = _bisect(dh, 0.0, r_peak)
    hi = r_peak
    while dh(hi) > 0.0:
        hi *= 2.0
    r_m = _bisect(dh, r_peak, hi)
    h_max = h(r_m)
    if h_max <= 0.0:
        raise GeometryError(
            "fitted minorant maximum is nonpositive; the two-level geometry "
            "is absent at this lambda — reduce lambda"
        )
    r0 = _bisect(h, r1, r_m)
    return MinorantGeometry(R0=r0, R1=0.5 * (r0 + r_m), R_M=r_m, h_max=h_max)


# safety factor applied to the fitted constants so fresh samples from the
# same family stay above the minorant
_FIT_MARGIN = 1.25
_C_FLOOR = 1e-12


def minorant_sample_family(s: EnergySetting, samples: int,
                           rng: np.random.Generator) -> list[ScalarField]:
    """Field family used to calibrate the minorant.

    Deterministic anchors (center bump of either sign, the polyharmonic
    inverse of the datum) are always included so the constants that control
    the inner ball are reproduced by every draw; the remainder are random
    bumps, smooth fields, and pairwise combinations.
    """
    dom = s.f.domain
    minext = min(dom.extent)
    center = tuple(0.5 * e for e in dom.extent)
    fam: list[ScalarField] = []
    for sign_exp in (s.params.k, s.params.k + 1):
        fam.append(bump_field(dom, center, 0.3 * minext, 1.0, sign_exp))
    pf = invert_polyharmonic(s.f, s.alpha)
    top = float(np.max(np.abs(pf.values)))
    if top > 0:
        fam.append(pf * (1.0 / top))
        fam.append(pf * (-1.0 / top))
    while len(fam) < samples:
        kind = rng.integers(0, 3)
        if kind == 0:
            c = tuple(e * rng.uniform(0.42, 0.58) for e in dom.extent)
            r = minext * rng.uniform(0.15, 0.25)
            fam.append(bump_field(dom, c, r, rng.uniform(0.5, 2.0),
                                  int(rng.integers(0, 2))))
        elif kind == 1:
            fam.append(random_smooth_field(dom, rng, modes=3,
                                           amplitude=rng.uniform(0.2, 1.5),
                                           ghost_width=s.alpha))
        else:
            if len(fam) >= 2:
                i, j = rng.integers(0, len(fam), size=2)
                fam.append(fam[int(i)] + fam[int(j)])
            else:
                fam.append(random_smooth_field(dom, rng, ghost_width=s.alpha))
    return fam[:samples]


def fit_minorant(s: EnergySetting, samples: int,
                 rng: np.random.Generator) -> MinorantCoefficients:
    """Empirical minorant constants for the sampled family and all its scalings.

    Because the datum and nonlinear terms are homogeneous of degree 1 and
    k+1 in the field, requiring the bound along every ray through a sample
    splits exactly into the two termwise ratios maximized here; a fixed
    margin then covers fresh draws from the same family.
    """
    if samples < 10:
        raise ValueError("need at least 10 samples for the minorant fit")
    s.validate_grid()
    k = s.params.k
    c1 = 0.0
    c2 = 0.0
    usable = 0
    for u in minorant_sample_family(s, samples, rng):
        r = seminorm(u, s.alpha)
        if r <= 0.0:
            continue
        usable += 1
        datum = _datum_term(u, s)
        nl = _nonlinear_term(u, s)
        c1 = max(c1, datum / r)
        c2 = max(c2, nl / r ** (k + 1))
    if usable < 10:
        raise FitError("minorant fit degenerate: fewer than 10 nonzero samples")
    c1 = max(_FIT_MARGIN * c1, _C_FLOOR * (1.0 + abs(s.lam)))
    c2 = max(_FIT_MARGIN * c2, _C_FLOOR)
    return MinorantCoefficients(C1=c1, C2=c2, k=k)


@dataclass(frozen=True)
class GeometryWitnesses:
    """Fields certifying the two sign conditions of the mountain-pass geometry."""

    phi: ScalarField
    psi: ScalarField
    datum_pairing: float      # lambda * int f phi  (0 when lambda == 0)
    nonlinear_pairing: float  # (-1)^k * int psi S_k[psi]
    phi_trivial: bool


def geometry_witnesses(s: EnergySetting) -> GeometryWitnesses:
    """Construct and verify the witness fields.

    psi is the compact radial bump with the sign flip that makes
    (-1)^k int psi S_k[psi] positive; phi is a mollification of the datum,
    signed by lambda, widened until lambda int f phi is positive.
    """
    s.validate_grid()
    dom = s.f.domain
    k = s.params.k
    minext = min(dom.extent)
    center = tuple(0.5 * e for e in dom.extent)
    # Both bump orientations are tried and the quadrature decides: for odd k
    # the pairing is sign-invariant, while for even k only the positive bump
    # verifies (sigma_k of the negative-definite Hessian at the peak is then
    # positive, so the radial computation gives int psi S_k[psi] > 0 there).
    psi = None
    psi_pairing = 0.0
    for frac in (0.3, 0.25, 0.35, 0.2, 0.4):
        for sign_exp in (k, k + 1):
            cand = bump_field(dom, center, frac * minext, 1.0, sign_exp)
            val = _sign_k(k) * inner(cand, sk_field(cand, k))
            if val > 0.0:
                psi, psi_pairing = cand, val
                break
        if psi is not None:
            break
    if psi is None:
        raise GeometryError("no bump orientation/radius produced a positive nonlinear pairing")

    if s.lam == 0.0:
        return GeometryWitnesses(zeros(dom, s.alpha), psi, 0.0, psi_pairing, True)
    sgn = 1.0 if s.lam > 0 else -1.0
    for sigma in (3.0, 6.0, 12.0, 24.0):
        smoothed = gaussian_filter(s.f.values, sigma=sigma, mode="constant")
        phi = ScalarField(dom, sgn * smoothed, s.alpha)
        val = s.lam * inner(s.f, phi)
        if val > 0.0:
            return GeometryWitnesses(phi, psi, val, psi_pairing, False)
    raise GeometryError("mollification sweep failed to produce a positive datum pairing")


def make_setting(params: ProblemParams, lam: float, f: ScalarField,
                 form: Form = Form.STRONG, alpha: int | None = None) -> EnergySetting:
    """Convenience constructor applying the regime formula when alpha is omitted."""
    expected = alpha_weak(params) if form is Form.WEAK else alpha_main(params)
    if alpha is None:
        alpha = expected
    return EnergySetting(
        params=params,
        alpha=alpha,
        lam=lam,
        f=f,
        form=form,
        alpha_overridden=(alpha != expected),
    )


def with_lambda(s: EnergySetting, lam: float) -> EnergySetting:
    return replace(s, lam=lam)
