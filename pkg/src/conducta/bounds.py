"""Closed-form upper bounds on the trace-averaged effective conductivity.

Three families are implemented:

* the trivial bound (arithmetic mean of sigma),
* the Hashin-Shtrikman upper bound, obtained from the H term at S = sup sigma,
* the refined bound H(S) + E(S) with a free shift parameter S > 0, where the
  E term controls the contribution of the phases above S through the tail of
  the distribution function.

E carries a dimensional constant C that is not known explicitly; it defaults
to 1 and is always recorded in the report, so every refined value is to be
read "modulo the constant C".  The simplified E form (default) drops the
L^2 / (sup sigma + (n-1)S)^2 factor, which is how the three-phase
specialization at S = sigma_2 is usually written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .phases import (
    PhaseSet,
    DistributionFunction,
    distribution_from_phases,
    distribution_weight,
    shifted_harmonic_L,
    tail_integral,
)

__all__ = [
    "BOUND_NAMES",
    "BoundConfig",
    "BoundReport",
    "trivial_upper",
    "h_term",
    "hs_upper",
    "theorem1_upper",
    "three_phase_refined",
    "optimize_S",
    "milton_gap",
]

BOUND_NAMES = (
    "trivial",
    "hashin_shtrikman",
    "theorem1",
    "theorem1_simplified",
    "three_phase_refined",
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BoundConfig:
    """Evaluation settings for the refined bound.

    C is the dimensional constant in the E term; S_search_points and
    S_tolerance control the grid + golden-section search of optimize_S.
    """

    C: float = 1.0
    use_simplified_E: bool = True
    S_search_points: int = 64
    S_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.C > 0.0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.S_tolerance > 0.0:
            raise ValueError(f"S_tolerance must be positive, got {self.S_tolerance}")
        if self.S_search_points < 16:
            raise ValueError(f"S_search_points must be >= 16, got {self.S_search_points}")


@dataclass(frozen=True)
class BoundReport:
    """One evaluated bound; value = H_term + E_term whenever both are present."""

    bound_name: str
    value: float
    S_used: float | None = None
    H_term: float | None = None
    E_term: float | None = None
    L_value: float | None = None
    C_used: float | None = None

    def __post_init__(self):
        if self.bound_name not in BOUND_NAMES:
            raise ValueError(f"unknown bound name {self.bound_name!r}")
        if self.E_term is not None and self.E_term < 0.0:
            raise ValueError(f"E term must be nonnegative, got {self.E_term}")
        if self.H_term is not None and self.E_term is not None:
            if abs(self.value - (self.H_term + self.E_term)) > 1e-12 * max(1.0, abs(self.value)):
                raise ValueError("value must equal H_term + E_term")

    def as_dict(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "value": self.value,
            "S_used": self.S_used,
            "H_term": self.H_term,
            "E_term": self.E_term,
            "L_value": self.L_value,
            "C_used": self.C_used,
        }


def trivial_upper(ps: PhaseSet) -> BoundReport:
    """Arithmetic mean of sigma: the bound from the zero test field."""
    value = math.fsum(p.volume_fraction * p.conductivity for p in ps.phases)
    return BoundReport("trivial", value)


def h_term(ps: PhaseSet, S: float) -> float:
    """H(S) = -(n-1) S + L(S), nondecreasing in S and below the arithmetic mean."""
    return -(ps.dimension - 1) * S + shifted_harmonic_L(ps, S)


def hs_upper(ps: PhaseSet) -> BoundReport:
    """Hashin-Shtrikman upper bound: H evaluated at S = sup sigma."""
    S = ps.sup_sigma
    L = shifted_harmonic_L(ps, S)
    H = -(ps.dimension - 1) * S + L
    return BoundReport(
        "hashin_shtrikman", H, S_used=S, H_term=H, E_term=0.0, L_value=L
    )


def _theorem1_terms(
    ps: PhaseSet, S: float, cfg: BoundConfig, dist: DistributionFunction
) -> tuple[float, float, float]:
    shift = (ps.dimension - 1) * S
    L = shifted_harmonic_L(ps, S)
    H = -shift + L
    tail = tail_integral(dist, S)
    osc = ps.osc_sigma
    w_lo = ps.inf_sigma + shift
    if cfg.use_simplified_E:
        E = cfg.C * osc * osc * tail / (w_lo * w_lo)
    else:
        w_hi = ps.sup_sigma + shift
        E = cfg.C * osc * osc * L * L * tail / (w_lo * w_lo * w_hi * w_hi)
    return H, E, L


def theorem1_upper(ps: PhaseSet, S: float, cfg: BoundConfig | None = None) -> BoundReport:
    """Refined upper bound H(S) + E(S) at a given shift parameter S > 0.

    Any S > 0 is accepted; for S >= sup sigma the tail integral vanishes, so
    E = 0 and the value reduces to H(S) (equal to the Hashin-Shtrikman bound
    at S = sup sigma exactly).  The report records S, H, E, L and C.
    """
    if not S > 0.0:
        raise ValueError(f"S must be positive, got {S}")
    cfg = cfg or BoundConfig()
    H, E, L = _theorem1_terms(ps, S, cfg, distribution_from_phases(ps))
    name = "theorem1_simplified" if cfg.use_simplified_E else "theorem1"
    return BoundReport(name, H + E, S_used=S, H_term=H, E_term=E, L_value=L, C_used=cfg.C)


def _refined_terms(
    dimension: int,
    sigmas: tuple[float, float, float],
    fractions: tuple[float, float, float],
    C: float,
) -> tuple[float, float, float]:
    """H, E, L of the three-phase specialization at S = sigma_2.

    Tolerates mu_3 = 0, where E vanishes by the continuous extension of
    mu (1 - log mu)^2 and H reduces to the two-phase value.
    """
    s1, s2, s3 = sigmas
    shift = (dimension - 1) * s2
    L = 1.0 / math.fsum(m / (s + shift) for s, m in zip(sigmas, fractions))
    H = -shift + L
    E = C * (s3 - s1) ** 2 * (s3 - s2) * distribution_weight(fractions[2]) / (s1 + shift) ** 2
    return H, E, L


def three_phase_refined(ps: PhaseSet, cfg: BoundConfig | None = None) -> BoundReport:
    """Three-phase refinement: the bound at S = sigma_2 with the simplified E.

    Agrees with theorem1_upper(ps, sigma_2) under the simplified E form, and
    converges to the two-phase Hashin-Shtrikman bound of the first two phases
    as mu_3 goes to zero.
    """
    cfg = cfg or BoundConfig()
    if ps.num_phases != 3:
        raise ValueError(f"three_phase_refined needs exactly 3 phases, got {ps.num_phases}")
    H, E, L = _refined_terms(ps.dimension, ps.conductivities, ps.fractions, cfg.C)
    return BoundReport(
        "three_phase_refined",
        H + E,
        S_used=ps.conductivities[1],
        H_term=H,
        E_term=E,
        L_value=L,
        C_used=cfg.C,
    )


def optimize_S(ps: PhaseSet, cfg: BoundConfig | None = None) -> BoundReport:
    """Minimize the refined bound over the shift parameter S in (0, sup sigma].

    The search never needs to leave (0, sup sigma]: the tail integral is
    identically zero from sup sigma on, so E = 0 there while H keeps growing.
    S is scanned on a grid of S_search_points that includes every sigma_i
    (the tail integral has kinks there), then the bracket around the best
    grid point is refined by golden section down to S_tolerance.  Ties are
    resolved toward the larger S.
    """
    cfg = cfg or BoundConfig()
    dist = distribution_from_phases(ps)
    sup = ps.sup_sigma

    def value(S: float) -> float:
        H, E, _ = _theorem1_terms(ps, S, cfg, dist)
        return H + E

    points = sorted(
        {sup * k / cfg.S_search_points for k in range(1, cfg.S_search_points + 1)}
        | set(ps.conductivities)
    )
    best_S = points[0]
    best_v = value(best_S)

    def consider(S: float, v: float):
        nonlocal best_S, best_v
        if v < best_v or (v == best_v and S > best_S):
            best_S, best_v = S, v

    values = [value(S) for S in points]
    for S, v in zip(points, values):
        consider(S, v)

    i = max(idx for idx, v in enumerate(values) if v == best_v)
    lo = points[i - 1] if i > 0 else points[0] / 2.0
    hi = points[i + 1] if i + 1 < len(points) else sup
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = value(x1), value(x2)
    consider(x1, f1)
    consider(x2, f2)
    for _ in range(200):
        if hi - lo <= cfg.S_tolerance:
            break
        if f1 > f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = value(x2)
            consider(x2, f2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = value(x1)
            consider(x1, f1)
    return theorem1_upper(ps, best_S, cfg)


def milton_gap(ps2: PhaseSet, sigma3: float) -> float:
    """Bound discontinuity when a vanishing third phase of conductivity sigma3
    is adjoined to a two-phase composite.

    Returns H(sigma3) - H(sigma2) on the two-phase fractions, i.e. the limit
    of the three-phase Hashin-Shtrikman bound as mu_3 -> 0+ minus the
    two-phase bound.  Strictly positive whenever sigma3 > sigma2, which is the
    counterintuitive jump first pointed out by Milton.
    """
    if ps2.num_phases != 2:
        raise ValueError(f"milton_gap needs exactly 2 phases, got {ps2.num_phases}")
    s2 = ps2.sup_sigma
    if sigma3 < s2:
        raise ValueError(f"sigma3 must be >= sigma2 = {s2}, got {sigma3}")
    return h_term(ps2, sigma3) - h_term(ps2, s2)
