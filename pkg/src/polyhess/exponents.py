"""Exact-rational regularity exponents and regime classification.

Every quantity here is computed in integer/rational arithmetic (``fractions``)
so that the sharp integer identities among the exponents survive intact; no
floating point is involved anywhere in this module.

Parameter conventions: ``N`` is the spatial dimension and ``k`` the order of
the Hessian nonlinearity, with the standing assumption ``2 <= k <= N``
(``k = 1`` makes the equation linear and is rejected).  The three regimes are
split on the sign of ``N - 2k``:

    SUPER     2k > N      datum in L^1
    CRITICAL  2k = N      datum in the local Hardy space h^1_r
    SUB       2k < N      datum in L^{p*}
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional


class Regime(enum.Enum):
    SUPER = "SUPER"
    SUB = "SUB"
    CRITICAL = "CRITICAL"


@dataclass(frozen=True)
class ProblemParams:
    """Dimension/order pair (N, k) with the standing restriction 2 <= k <= N."""

    N: int
    k: int

    def __post_init__(self):
        if not isinstance(self.N, int) or not isinstance(self.k, int):
            raise ValueError("N and k must be integers")
        if self.N < 2:
            raise ValueError(f"spatial dimension N={self.N} must be >= 2")
        if not 2 <= self.k <= self.N:
            raise ValueError(f"Hessian order k={self.k} must satisfy 2 <= k <= N={self.N}")


def _ceil_div(num: int, den: int) -> int:
    """Exact ceiling of num/den for positive den."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    return -((-num) // den)


def classify_regime(params: ProblemParams) -> Regime:
    if 2 * params.k > params.N:
        return Regime.SUPER
    if 2 * params.k == params.N:
        return Regime.CRITICAL
    return Regime.SUB


def alpha_main(params: ProblemParams) -> int:
    """Order of the polyharmonic term for the pointwise nonlinearity.

    SUPER: ceil(2 + (k-2)N/(2k)); SUB: ceil((Nk - N + 4k)/(2k + 2));
    CRITICAL: N/2.
    """
    N, k = params.N, params.k
    regime = classify_regime(params)
    if regime is Regime.SUPER:
        return _ceil_div(4 * k + (k - 2) * N, 2 * k)
    if regime is Regime.SUB:
        return _ceil_div(N * k - N + 4 * k, 2 * k + 2)
    return N // 2


def alpha_weak(params: ProblemParams) -> int:
    """Order used with the divergence-form nonlinearity: ceil((Nk-N+4k)/(2k+2)), all regimes."""
    N, k = params.N, params.k
    return _ceil_div(N * k - N + 4 * k, 2 * k + 2)


def alpha_summable(params: ProblemParams) -> int:
    """Order for plain L^1 data in every regime.

    ceil((N+1)/2) for k <= floor(2N/3), else ceil((N+2)/2).
    """
    N, k = params.N, params.k
    if k <= (2 * N) // 3:
        return _ceil_div(N + 1, 2)
    return _ceil_div(N + 2, 2)


@dataclass(frozen=True)
class LebesgueExponents:
    """Hoelder-dual exponent family; entries are exact rationals, None = undefined.

    p_star/q_star pair the nonlinearity against the solution
    (1/p* + 1/q* = 1); p_tilde/q_tilde bound the second variation
    (2/q~ + 1/p~ = 1).  q_star exists only below the critical dimension
    (2k < N).
    """

    p_star: Fraction
    q_star: Optional[Fraction]
    p_tilde: Fraction
    q_tilde: Fraction


def lebesgue_exponents(params: ProblemParams) -> LebesgueExponents:
    N, k = params.N, params.k
    p_star = Fraction(N * (k + 1), k * (N + 2))
    q_star = Fraction(N * (k + 1), N - 2 * k) if N - 2 * k > 0 else None
    p_tilde = Fraction(N * (k + 1), (N + 2) * (k - 1))
    q_tilde = Fraction(N * (k + 1), N - k + 1)
    return LebesgueExponents(p_star, q_star, p_tilde, q_tilde)


_DATUM_LABELS = {
    Regime.SUPER: "L1",
    Regime.SUB: "Lp*",
    Regime.CRITICAL: "h1_r (treated numerically as L1)",
}


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    alpha_main: int
    alpha_weak: int
    alpha_summable: int
    p_star: Fraction
    q_star: Optional[Fraction]
    p_tilde: Fraction
    q_tilde: Fraction
    datum_space_label: str

    def to_json_dict(self) -> dict:
        """JSON-ready dict; rationals rendered as "num/den" strings, None -> "undefined"."""

        def rat(x):
            if x is None:
                return "undefined"
            return f"{x.numerator}/{x.denominator}"

        return {
            "regime": self.regime.value,
            "alpha_main": self.alpha_main,
            "alpha_weak": self.alpha_weak,
            "alpha_summable": self.alpha_summable,
            "p_star": rat(self.p_star),
            "q_star": rat(self.q_star),
            "p_tilde": rat(self.p_tilde),
            "q_tilde": rat(self.q_tilde),
            "datum_space_label": self.datum_space_label,
        }


def regime_report(params: ProblemParams) -> RegimeReport:
    regime = classify_regime(params)
    exps = lebesgue_exponents(params)
    return RegimeReport(
        regime=regime,
        alpha_main=alpha_main(params),
        alpha_weak=alpha_weak(params),
        alpha_summable=alpha_summable(params),
        p_star=exps.p_star,
        q_star=exps.q_star,
        p_tilde=exps.p_tilde,
        q_tilde=exps.q_tilde,
        datum_space_label=_DATUM_LABELS[regime],
    )
