"""Tight value brackets for integral functionals over a convexity family.

The two candidate constants are the order-n and order-0 antiderivative ratios
at the transformed mode level b: the first is attained by the orthant
extremal density, the second by the uniform box.  A candidate is certified as
a sharp bound once the sign conditions at b hold and the order-0 difference
function has at most one zero on [b, inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import discrete
from .antiderivatives import (
    CLOSED_FORM,
    QUADRATURE,
    AntiderivativeTable,
    build_table,
)
from .families import (
    BETA_CONCAVE,
    ENTROPY,
    LOG_CONCAVE,
    RENYI,
    TRUNCATION,
    ConvexityFamily,
    DensitySpec,
    FamilyError,
    Functional,
    make_extremal_linear,
    make_uniform_box,
)

__all__ = [
    "ConditionStatus",
    "ConditionEvidence",
    "BoundResult",
    "BoundConditionError",
    "check_conditions",
    "tight_bounds",
    "closed_form_bounds",
    "counterexample_density",
    "binomial_variational",
    "entropy_gap",
    "renyi_gap",
    "truncation_upper",
    "SCALE_INTEGRAL",
    "SCALE_RENYI",
]


class ConditionStatus(str, Enum):
    PROVED = "proved"
    NUMERIC = "numerically-verified"
    UNVERIFIED = "unverified"


class BoundConditionError(RuntimeError):
    """A sign condition failed outright at a candidate constant."""


@dataclass(frozen=True)
class ConditionEvidence:
    """Outcome of the three bound conditions for one candidate constant."""

    a: float
    side: str  # "upper" or "lower"
    order_n_margin: float
    order_0_margin: float
    order_n: ConditionStatus
    order_0: ConditionStatus
    single_crossing: ConditionStatus
    detail: str = ""

    def all_hold(self) -> bool:
        return ConditionStatus.UNVERIFIED not in (
            self.order_n, self.order_0, self.single_crossing)


SCALE_INTEGRAL = "integral"
SCALE_RENYI = "renyi-entropy"


@dataclass(frozen=True)
class BoundResult:
    """Validated bracket for the functional value over the whole family.

    ``lower``/``upper`` are in the functional's reporting scale (Renyi values
    are converted to entropy units); ``i_lower``/``i_upper`` always bracket
    the raw integral and equal the min/max of the two candidate constants.
    """

    lower: float
    upper: float
    a_orthant: float  # order-n candidate, attained by the orthant extremal
    a_box: float      # order-0 candidate, attained by the uniform box
    i_lower: float
    i_upper: float
    evidence: tuple
    b: float
    n: int
    scale: str
    source: str

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def validated(self) -> bool:
        return all(ev.all_hold() for ev in self.evidence)

    def as_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "gap": self.gap,
            "a_orthant": self.a_orthant,
            "a_box": self.a_box,
            "i_lower": self.i_lower,
            "i_upper": self.i_upper,
            "b": self.b,
            "n": self.n,
            "scale": self.scale,
            "source": self.source,
            "validated": self.validated(),
            "conditions": [
                {
                    "side": ev.side,
                    "a": ev.a,
                    "order_n_margin": ev.order_n_margin,
                    "order_0_margin": ev.order_0_margin,
                    "order_n": ev.order_n.value,
                    "order_0": ev.order_0.value,
                    "single_crossing": ev.single_crossing.value,
                    "detail": ev.detail,
                }
                for ev in self.evidence
            ],
        }


def _single_crossing_status(functional: Functional, family: ConvexityFamily,
                            a: float) -> tuple[ConditionStatus, str]:
    """Certify that F_0 - a*G_0 has at most one zero on [b, inf)."""
    fk, gk = functional.kind, family.kind
    if gk in (LOG_CONCAVE, BETA_CONCAVE) and fk in (ENTROPY, RENYI):
        # difference reduces to (strictly monotone function - a) * psi
        return ConditionStatus.PROVED, "monotone-crossing argument"
    if gk in (LOG_CONCAVE, BETA_CONCAVE) and fk == TRUNCATION:
        if a < 1.0:
            return ConditionStatus.PROVED, "piecewise sign argument (a < 1)"
        return ConditionStatus.UNVERIFIED, f"truncation crossing argument needs a < 1, got {a}"
    return ConditionStatus.UNVERIFIED, "no analytic argument for this pair"


def _scan_crossings(table: AntiderivativeTable, a: float) -> tuple[ConditionStatus, str]:
    """Sign-change scan of F_0 - a*G_0 on a geometric grid up to the tail cutoff."""
    b = table.b
    fam = table.family
    try:
        hi = float(fam.psi_inv(table.f_max * 1e-18))
    except Exception:
        hi = b + 1e6
    if not math.isfinite(hi) or hi <= b:
        hi = b + 1e6
    offsets = np.geomspace(1e-9, hi - b, 10_000)
    xs = b + offsets
    h0 = np.asarray(table._f_model.fn(xs), dtype=float) - a * np.asarray(
        table._g_model.fn(xs), dtype=float)
    scale = float(np.max(np.abs(h0)))
    if scale == 0.0:
        return ConditionStatus.UNVERIFIED, "difference identically zero on scan grid"
    signs = np.sign(h0[np.abs(h0) > 1e-13 * scale])
    changes = int(np.count_nonzero(np.diff(signs) != 0))
    if changes >= 2:
        return ConditionStatus.UNVERIFIED, f"scan found {changes} sign changes"
    if abs(h0[-1]) > 1e-7 * scale:
        return ConditionStatus.UNVERIFIED, "difference not settled near the tail cutoff"
    return ConditionStatus.NUMERIC, f"scan found {changes} sign change(s) over 10^4 points"


def check_conditions(table: AntiderivativeTable, a: float, side: str = "upper",
                     tie_tol: float = 1e-9) -> ConditionEvidence:
    """Evaluate the sign conditions at b and the single-crossing condition.

    ``side`` selects the inequality direction: an upper-bound constant needs
    both margins <= 0, a lower-bound constant needs both >= 0.  Margins within
    ``tie_tol`` of zero (relative to the term magnitudes) count as satisfied.
    """
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    b = table.b
    fn, gn = table.F(table.n, b), table.G(table.n, b)
    f0, g0 = table.F(0, b), table.G(0, b)
    margin_n = fn - a * gn
    margin_0 = f0 - a * g0
    slack_n = tie_tol * (abs(fn) + abs(a * gn)) + 4.0 * table.tol
    slack_0 = tie_tol * (abs(f0) + abs(a * g0)) + 4.0 * table.tol

    def sign_status(margin: float, slack: float) -> ConditionStatus:
        ok = margin <= slack if side == "upper" else margin >= -slack
        return ConditionStatus.NUMERIC if ok else ConditionStatus.UNVERIFIED

    status_n = sign_status(margin_n, slack_n)
    status_0 = sign_status(margin_0, slack_0)
    crossing, detail = _single_crossing_status(table.functional, table.family, a)
    if crossing is ConditionStatus.UNVERIFIED and table.functional.kind not in (
            ENTROPY, RENYI, TRUNCATION):
        crossing, detail = _scan_crossings(table, a)
    elif crossing is ConditionStatus.UNVERIFIED and table.family.kind not in (
            LOG_CONCAVE, BETA_CONCAVE):
        crossing, detail = _scan_crossings(table, a)
    return ConditionEvidence(a=a, side=side, order_n_margin=margin_n,
                             order_0_margin=margin_0, order_n=status_n,
                             order_0=status_0, single_crossing=crossing, detail=detail)


def _report_scale(functional: Functional, i_lower: float, i_upper: float) -> tuple:
    """Map the raw integral bracket to the functional's reporting units."""
    if functional.kind == RENYI:
        alpha = functional.alpha
        vals = sorted((math.log(i_lower) / (1.0 - alpha), math.log(i_upper) / (1.0 - alpha)))
        return vals[0], vals[1], SCALE_RENYI
    return i_lower, i_upper, SCALE_INTEGRAL


def tight_bounds(functional: Functional, family: ConvexityFamily, n: int, f_max: float,
                 tol: float = 1e-10, method: str = "auto") -> BoundResult:
    """Certified bracket from the generic antiderivative engine.

    ``method`` "auto" prefers closed forms; "quadrature" forces the generic
    numeric path (used for cross-checks against the closed forms).
    """
    prefer = QUADRATURE if method == "quadrature" else CLOSED_FORM
    table = build_table(functional, family, n, f_max, tol=tol, prefer=prefer)
    b = table.b
    a_orthant = table.F(n, b) / table.G(n, b)
    a_box = table.F(0, b) / table.G(0, b)
    i_lower, i_upper = sorted((a_orthant, a_box))
    ev_upper = check_conditions(table, i_upper, side="upper")
    ev_lower = check_conditions(table, i_lower, side="lower")
    for ev in (ev_upper, ev_lower):
        if ConditionStatus.UNVERIFIED in (ev.order_n, ev.order_0):
            raise BoundConditionError(
                f"sign condition failed at candidate {ev.a} ({ev.side})")
    lower, upper, scale = _report_scale(functional, i_lower, i_upper)
    sources = set(table.f_source) | set(table.g_source)
    source = sources.pop() if len(sources) == 1 else "mixed"
    return BoundResult(lower=lower, upper=upper, a_orthant=a_orthant, a_box=a_box,
                       i_lower=i_lower, i_upper=i_upper,
                       evidence=(ev_upper, ev_lower), b=b, n=n, scale=scale,
                       source=source)


def _proved_evidence(a: float, side: str) -> ConditionEvidence:
    return ConditionEvidence(a=a, side=side, order_n_margin=0.0, order_0_margin=0.0,
                             order_n=ConditionStatus.PROVED, order_0=ConditionStatus.PROVED,
                             single_crossing=ConditionStatus.PROVED,
                             detail="closed-form bracket")


def closed_form_bounds(functional: Functional, family: ConvexityFamily, n: int,
                       f_max: float) -> BoundResult:
    """Explicit bracket formulas for the six built-in pairs."""
    if n < 1:
        raise FamilyError("dimension must be >= 1")
    if not f_max > 0:
        raise FamilyError("f_max must be positive")
    fk, gk = functional.kind, family.kind
    b = float(family.psi_inv(f_max))
    log_inv = -math.log(f_max)

    if fk == ENTROPY and gk == LOG_CONCAVE:
        a_box, a_orthant = log_inv, log_inv + n
    elif fk == ENTROPY and gk == BETA_CONCAVE:
        if family.beta <= n:
            raise FamilyError(f"entropy bracket needs beta > n, got beta={family.beta}")
        a_box = log_inv
        a_orthant = log_inv + entropy_gap(family.beta, n)
    elif fk == RENYI and gk == LOG_CONCAVE:
        alpha = functional.alpha
        a_box = f_max ** (alpha - 1.0)
        a_orthant = a_box * alpha ** (-n)
    elif fk == RENYI and gk == BETA_CONCAVE:
        alpha, beta = functional.alpha, family.beta
        if min(alpha, 1.0) * beta <= n:
            raise FamilyError(
                f"Renyi bracket needs min(alpha,1)*beta > n "
                f"(alpha={alpha}, beta={beta}, n={n})")
        a_box = f_max ** (alpha - 1.0)
        prod = 1.0
        for i in range(1, n + 1):
            prod *= (beta - i) / (alpha * beta - i)
        a_orthant = a_box * prod
    elif fk == TRUNCATION and gk == LOG_CONCAVE:
        t = functional.t
        if not 0.0 < t < f_max:
            raise FamilyError(f"truncation bracket needs 0 < t < f_max, got t={t}")
        a_box = t / f_max
        a_orthant = truncation_upper(family, n, f_max, t)
    elif fk == TRUNCATION and gk == BETA_CONCAVE:
        t, beta = functional.t, family.beta
        if not 0.0 < t < f_max:
            raise FamilyError(f"truncation bracket needs 0 < t < f_max, got t={t}")
        if beta != int(beta) or int(beta) < n + 1:
            raise FamilyError(
                f"binomial truncation bracket needs integer beta >= n+1, got beta={beta}")
        a_box = t / f_max
        a_orthant = truncation_upper(family, n, f_max, t)
    else:
        raise FamilyError(f"no closed-form bracket for ({fk}, {gk})")

    i_lower, i_upper = sorted((a_orthant, a_box))
    if fk == ENTROPY and gk == LOG_CONCAVE:
        lower, upper, scale = log_inv, log_inv + float(n), SCALE_INTEGRAL
    elif fk == ENTROPY:
        lower, upper, scale = log_inv, log_inv + entropy_gap(family.beta, n), SCALE_INTEGRAL
    elif fk == RENYI:
        gap = renyi_gap(functional.alpha, family.beta if gk == BETA_CONCAVE else None, n)
        lower, upper, scale = log_inv, log_inv + gap, SCALE_RENYI
    else:
        lower, upper, scale = i_lower, i_upper, SCALE_INTEGRAL
    return BoundResult(lower=lower, upper=upper, a_orthant=a_orthant, a_box=a_box,
                       i_lower=i_lower, i_upper=i_upper,
                       evidence=(_proved_evidence(i_upper, "upper"),
                                 _proved_evidence(i_lower, "lower")),
                       b=b, n=n, scale=scale, source=CLOSED_FORM)


def entropy_gap(beta: float | None, n: int) -> float:
    """Bracket width for differential entropy: sum_i beta/(beta-i), or n at beta=inf."""
    if beta is None or math.isinf(beta):
        return float(n)
    if beta <= n:
        raise FamilyError(f"entropy gap needs beta > n, got beta={beta}, n={n}")
    return math.fsum(beta / (beta - i) for i in range(1, n + 1))


def renyi_gap(alpha: float, beta: float | None, n: int) -> float:
    """Bracket width for Renyi entropy; beta=None gives the log-concave form."""
    if not alpha > 0 or alpha == 1.0:
        raise FamilyError(f"Renyi gap needs alpha > 0, alpha != 1, got {alpha}")
    if beta is None or math.isinf(beta):
        return n * math.log(alpha) / (alpha - 1.0)
    if min(alpha, 1.0) * beta <= n:
        raise FamilyError(
            f"Renyi gap needs min(alpha,1)*beta > n (alpha={alpha}, beta={beta}, n={n})")
    return math.fsum(math.log((alpha * beta - i) / (beta - i))
                     for i in range(1, n + 1)) / (alpha - 1.0)


def truncation_upper(family: ConvexityFamily, n: int, f_max: float, t: float) -> float:
    """Sharp upper bound on the truncated mass at threshold t.

    Log-concave: the ratio series (t/f_max) * sum_k log(f_max/t)**k / k!,
    equal to a Poisson CDF.  Power family (integer beta >= n+1): the binomial
    CDF at n with trials beta and success probability 1-(t/f_max)**(1/beta).
    """
    if not 0.0 < t < f_max:
        raise FamilyError(f"needs 0 < t < f_max, got t={t}, f_max={f_max}")
    if family.kind == LOG_CONCAVE:
        lam = math.log(f_max / t)
        term = 1.0
        terms = [1.0]
        for k in range(1, n + 1):
            term *= lam / k
            terms.append(term)
        return (t / f_max) * math.fsum(terms)
    if family.kind == BETA_CONCAVE:
        beta = family.beta
        if beta != int(beta) or int(beta) < n + 1:
            raise FamilyError(
                f"binomial truncation bound needs integer beta >= n+1, got {beta}")
        p = 1.0 - (t / f_max) ** (1.0 / beta)
        return discrete.binomial_cdf(int(beta), p, n)
    raise FamilyError("no closed-form truncation bound for custom families")


def counterexample_density(functional: Functional, family: ConvexityFamily, n: int,
                           f_max: float, a: float, violated: str) -> DensitySpec:
    """Density whose functional value exceeds a constant that fails a sign condition.

    ``violated`` is "i" (order-n condition: returns the orthant extremal) or
    "ii" (order-0 condition: returns the uniform box).  Rejects constants that
    do not actually sit strictly below the corresponding candidate.
    """
    if violated not in ("i", "ii"):
        raise ValueError("violated must be 'i' or 'ii'")
    try:
        res = closed_form_bounds(functional, family, n, f_max)
        cand_i, cand_ii = res.a_orthant, res.a_box
    except FamilyError:
        table = build_table(functional, family, n, f_max)
        cand_i = table.F(n, table.b) / table.G(n, table.b)
        cand_ii = table.F(0, table.b) / table.G(0, table.b)
    candidate = cand_i if violated == "i" else cand_ii
    if not a < candidate:
        raise ValueError(
            f"a={a} does not violate condition ({violated}); candidate is {candidate}")
    if violated == "i":
        return make_extremal_linear(family, n, f_max)
    return make_uniform_box(family, n, f_max)


def binomial_variational(n: int, k: int, c: float) -> float:
    """P(B(n, 1 - exp(-c/n)) <= k), the sharp truncated-mass supremum constant."""
    if n < 1 or k < 0:
        raise ValueError(f"needs n >= 1 and k >= 0, got n={n}, k={k}")
    if not c > 0:
        raise ValueError(f"needs c > 0, got {c}")
    return discrete.binomial_cdf(n, 1.0 - math.exp(-c / n), k)
