"""Repeated tail antiderivatives of the transformed integrands.

For a family kernel psi and a functional kernel phi the engine evaluates

    F_k(x) = int_x^inf (y-x)**(k-1)/(k-1)! * phi(psi(y)) dy
    G_k(x) = int_x^inf (y-x)**(k-1)/(k-1)! * psi(y) dy

with F_0 = phi o psi and G_0 = psi (the single-integral form of k-fold
repeated integration).  Closed forms are used for the six built-in
(functional, family) pairs; everything else falls back to adaptive
quadrature over a finite window plus a certified tail majorant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from . import discrete
from .families import (
    BETA_CONCAVE,
    CUSTOM,
    ENTROPY,
    LOG_CONCAVE,
    RENYI,
    TRUNCATION,
    ConvexityFamily,
    Functional,
    NonIntegrableError,
)

__all__ = [
    "NoClosedFormError",
    "NoTailModelError",
    "QuadratureConvergenceError",
    "TailDecay",
    "IntegrandModel",
    "mass_integrand",
    "composed_integrand",
    "tail_weight_bound",
    "cauchy_repeated_integral",
    "closed_form_G",
    "closed_form_F",
    "AntiderivativeTable",
    "build_table",
]


class NoClosedFormError(LookupError):
    """No closed-form antiderivative is known for the requested pair."""


class NoTailModelError(LookupError):
    """No certified decay majorant is available for the integrand."""


class QuadratureConvergenceError(RuntimeError):
    """The integration window grew past its doubling budget without converging."""


@dataclass(frozen=True)
class TailDecay:
    """Decay majorant shape for an integrand on a right half-line.

    kind "exp":        |h(x)| <= C exp(-rate*x)
    kind "exp-linear": |h(x)| <= C x exp(-rate*x)
    kind "power":      |h(x)| <= C x**(-rate)
    kind "power-log":  |h(x)| <= C x**(-rate) log(x)

    The constant C is calibrated from |h| at the window edge, which is valid
    for edges at or beyond ``valid_from``.
    """

    kind: str
    rate: float
    valid_from: float


@dataclass(frozen=True)
class IntegrandModel:
    """Scalar integrand with kink locations and tail/monotonicity metadata."""

    fn: Callable
    kinks: tuple = ()
    tail: TailDecay | None = None
    abs_decreasing_from: float = math.inf


def mass_integrand(family: ConvexityFamily) -> IntegrandModel:
    """psi itself, with its decay model."""
    fn = lambda x: np.asarray(family.psi(x), dtype=float)
    if family.kind == LOG_CONCAVE:
        return IntegrandModel(fn=fn, tail=TailDecay("exp", 1.0, -math.inf),
                              abs_decreasing_from=-math.inf)
    if family.kind == BETA_CONCAVE:
        return IntegrandModel(fn=fn, tail=TailDecay("power", family.beta, 1e-300),
                              abs_decreasing_from=0.0)
    return IntegrandModel(fn=fn, tail=None, abs_decreasing_from=math.inf)


def composed_integrand(functional: Functional, family: ConvexityFamily) -> IntegrandModel:
    """phi o psi with per-pair kinks, decay majorant, and |.|-monotone threshold."""
    fn = lambda x: np.asarray(functional.phi(family.psi(x)), dtype=float)
    fk, gk = functional.kind, family.kind
    if gk == LOG_CONCAVE:
        if fk == ENTROPY:
            # |x exp(-x)|: envelope is exact for x > 0, decreasing beyond 1
            return IntegrandModel(fn=fn, tail=TailDecay("exp-linear", 1.0, 1e-12),
                                  abs_decreasing_from=1.0)
        if fk == RENYI:
            return IntegrandModel(fn=fn, tail=TailDecay("exp", functional.alpha, -math.inf),
                                  abs_decreasing_from=-math.inf)
        if fk == TRUNCATION:
            kink = -math.log(functional.t)
            return IntegrandModel(fn=fn, kinks=(kink,), tail=TailDecay("exp", 1.0, kink),
                                  abs_decreasing_from=kink)
    if gk == BETA_CONCAVE:
        beta = family.beta
        if fk == ENTROPY:
            # beta x**-beta log x: the power-log envelope ratio is constant for x > 1
            return IntegrandModel(fn=fn, tail=TailDecay("power-log", beta, math.e),
                                  abs_decreasing_from=math.exp(1.0 / beta))
        if fk == RENYI:
            return IntegrandModel(fn=fn, tail=TailDecay("power", functional.alpha * beta, 1e-300),
                                  abs_decreasing_from=0.0)
        if fk == TRUNCATION:
            kink = functional.t ** (-1.0 / beta)
            return IntegrandModel(fn=fn, kinks=(kink,), tail=TailDecay("power", beta, kink),
                                  abs_decreasing_from=kink)
    kinks = ()
    if fk == TRUNCATION:
        kinks = (float(family.psi_inv(functional.t)),)
    return IntegrandModel(fn=fn, kinks=kinks, tail=None, abs_decreasing_from=math.inf)


def _exp_partial_sum(z: float, n: int) -> float:
    """sum_{j=0}^{n-1} z**j / j!  (the exp(z)-scaled upper incomplete gamma at integer n)."""
    term = 1.0
    total = 1.0
    for j in range(1, n):
        term *= z / j
        total += term
    return total


def tail_weight_bound(model: IntegrandModel, n: int, origin: float, start: float) -> float:
    """Certified upper bound on int_start^inf (x-origin)**(n-1)/(n-1)! |h(x)| dx.

    Requires ``start`` at or beyond the model's envelope validity point.
    Raises :class:`NoTailModelError` when the model carries no decay majorant
    or the majorant decays too slowly for the requested weight order.
    """
    tail = model.tail
    if tail is None:
        raise NoTailModelError("integrand has no certified decay majorant")
    if start < tail.valid_from or start <= origin:
        raise NoTailModelError(f"tail start {start} below validity threshold")
    habs = abs(float(model.fn(start)))
    if tail.kind == "exp":
        r = tail.rate
        z = r * (start - origin)
        return habs * r ** (-n) * _exp_partial_sum(z, n)
    if tail.kind == "exp-linear":
        if start <= 0:
            raise NoTailModelError("exp-linear envelope needs start > 0")
        r = tail.rate
        z = r * (start - origin)
        val = habs / start * (n * r ** (-(n + 1)) * _exp_partial_sum(z, n + 1)
                              + origin * r ** (-n) * _exp_partial_sum(z, n))
        return max(val, 0.0)
    if tail.kind == "power":
        q = tail.rate
        if q <= n:
            raise NoTailModelError(f"power decay {q} too slow for weight order {n}")
        kappa = (1.0 + max(0.0, -origin) / start) ** (n - 1)
        return kappa * habs * start ** n / ((q - n) * math.factorial(n - 1))
    if tail.kind == "power-log":
        q = tail.rate
        if q <= n:
            raise NoTailModelError(f"power decay {q} too slow for weight order {n}")
        if start <= 1.0:
            raise NoTailModelError("power-log envelope needs start > 1")
        kappa = (1.0 + max(0.0, -origin) / start) ** (n - 1)
        num = (q - n) * math.log(start) + 1.0
        return (kappa * habs * start ** n * num
                / ((q - n) ** 2 * math.log(start) * math.factorial(n - 1)))
    raise NoTailModelError(f"unknown tail kind {tail.kind!r}")


def _finite_quad(fn, weight, a: float, b: float, kinks, epsabs: float) -> float:
    pts = sorted(k for k in kinks if a < k < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(lambda x: weight(x) * float(fn(x)), a, b,
                                points=pts or None, epsabs=epsabs, epsrel=1e-11,
                                limit=500)
    return val


def cauchy_repeated_integral(h, n: int, b: float, tol: float = 1e-10, *,
                             kinks=(), tail: TailDecay | None = None,
                             max_doublings: int = 60) -> float:
    """n-fold repeated tail integral of h evaluated at b, absolute error <= tol.

    Evaluates int_b^inf (x-b)**(n-1)/(n-1)! h(x) dx by adaptive quadrature on
    a finite window whose truncated tail is certified below tol/2 (via the
    integrand's decay majorant, or window-doubling extrapolation when no
    majorant is available).
    """
    if isinstance(h, IntegrandModel):
        model = h
    else:
        model = IntegrandModel(fn=h, kinks=tuple(kinks), tail=tail)
    if n == 0:
        return float(model.fn(b))
    if n < 0:
        raise ValueError("order must be >= 0")
    fact = math.factorial(n - 1)
    weight = lambda x: (x - b) ** (n - 1) / fact
    span0 = max(1.0, *(k - b for k in model.kinks if k > b)) if any(
        k > b for k in model.kinks) else 1.0
    if model.tail is not None:
        x_cut = b + span0
        if math.isfinite(model.tail.valid_from):
            x_cut = max(x_cut, model.tail.valid_from)
        for _ in range(max_doublings):
            try:
                bound = tail_weight_bound(model, n, b, x_cut)
            except NoTailModelError:
                bound = math.inf
            if bound <= tol / 2:
                return _finite_quad(model.fn, weight, b, x_cut, model.kinks, tol / 2)
            x_cut = b + 2.0 * (x_cut - b)
        raise QuadratureConvergenceError(
            f"tail bound did not reach {tol / 2:g} within {max_doublings} doublings")
    # no majorant: double the window and extrapolate the tail from increments
    x_cut = b + span0
    prev = _finite_quad(model.fn, weight, b, x_cut, model.kinks, tol / 8)
    prev_inc = None
    for _ in range(max_doublings):
        new_cut = b + 2.0 * (x_cut - b)
        cur = prev + _finite_quad(model.fn, weight, x_cut, new_cut, model.kinks, tol / 8)
        inc = cur - prev
        if prev_inc is not None and abs(inc) <= tol / 4:
            ratio = abs(inc) / max(abs(prev_inc), 1e-300)
            if ratio < 0.75 and abs(inc) * ratio / (1.0 - ratio) <= tol / 4:
                return cur
        prev, prev_inc, x_cut = cur, inc, new_cut
    raise QuadratureConvergenceError(
        f"window-doubling extrapolation did not converge within {max_doublings} doublings")


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def closed_form_G(family: ConvexityFamily, k: int, x: float) -> float:
    """k-fold repeated tail integral of psi, closed form when known."""
    if family.gk_provider is None:
        raise NoClosedFormError("family has no closed-form antiderivative provider")
    return float(family.gk_provider(k, x))


def closed_form_F(functional: Functional, family: ConvexityFamily, k: int, x: float) -> float:
    """k-fold repeated tail integral of phi o psi for the built-in pairs.

    Raises :class:`NoClosedFormError` for pairs without a known closed form
    and :class:`NonIntegrableError` when the requested order does not exist.
    """
    fk, gk = functional.kind, family.kind
    if gk == LOG_CONCAVE:
        if fk == ENTROPY:
            return (x + k) * math.exp(-x)
        if fk == RENYI:
            return functional.alpha ** (-k) * math.exp(-functional.alpha * x)
        if fk == TRUNCATION:
            x_star = -math.log(functional.t)
            return math.exp(-x) * discrete.poisson_cdf(max(x_star - x, 0.0), k)
    if gk == BETA_CONCAVE:
        beta = family.beta
        if fk == ENTROPY:
            if beta <= k:
                raise NonIntegrableError(f"entropy integrand needs beta > {k}, got {beta}")
            denom = 1.0
            harmonic = 0.0
            for i in range(1, k + 1):
                denom *= beta - i
                harmonic += 1.0 / (beta - i)
            return beta * x ** (k - beta) * (math.log(x) + harmonic) / denom
        if fk == RENYI:
            ab = functional.alpha * beta
            if ab <= k:
                raise NonIntegrableError(f"Renyi integrand needs alpha*beta > {k}, got {ab}")
            denom = 1.0
            for i in range(1, k + 1):
                denom *= ab - i
            return x ** (k - ab) / denom
        if fk == TRUNCATION:
            if beta <= k:
                raise NonIntegrableError(f"truncation integrand needs beta > {k}, got {beta}")
            ratio = min(functional.t * x ** beta, 1.0)
            return closed_form_G(family, k, x) * discrete.truncation_gamma_series(beta, k, ratio)
    raise NoClosedFormError(f"no closed form for ({fk}, {gk})")


CLOSED_FORM = "closed-form"
QUADRATURE = "quadrature"


@dataclass
class AntiderivativeTable:
    """Evaluators for F_k and G_k on [b, inf), k = 0..n, with source tags."""

    functional: Functional
    family: ConvexityFamily
    n: int
    b: float
    f_max: float
    tol: float
    f_source: tuple
    g_source: tuple
    _f_model: IntegrandModel
    _g_model: IntegrandModel

    def __post_init__(self):
        self._cache: dict = {}

    def F(self, k: int, x: float) -> float:
        return self._eval("F", k, float(x))

    def G(self, k: int, x: float) -> float:
        return self._eval("G", k, float(x))

    def _eval(self, which: str, k: int, x: float) -> float:
        if not 0 <= k <= self.n:
            raise ValueError(f"order {k} outside 0..{self.n}")
        key = (which, k, x)
        if key in self._cache:
            return self._cache[key]
        if which == "F":
            source, model = self.f_source[k], self._f_model
            closed = lambda: closed_form_F(self.functional, self.family, k, x)
        else:
            source, model = self.g_source[k], self._g_model
            closed = lambda: closed_form_G(self.family, k, x)
        if source == CLOSED_FORM:
            val = closed()
        elif k == 0:
            val = float(model.fn(x))
        else:
            val = cauchy_repeated_integral(model, k, x, self.tol)
        self._cache[key] = val
        return val


def _check_integrable(functional: Functional, family: ConvexityFamily, n: int) -> None:
    if family.kind != BETA_CONCAVE:
        return
    beta = family.beta
    if functional.kind in (ENTROPY, TRUNCATION) and beta <= n:
        raise NonIntegrableError(
            f"{functional.kind} over the power family needs beta > n "
            f"(got beta={beta}, n={n})")
    if functional.kind == RENYI and min(functional.alpha, 1.0) * beta <= n:
        raise NonIntegrableError(
            f"Renyi over the power family needs min(alpha,1)*beta > n "
            f"(got alpha={functional.alpha}, beta={beta}, n={n})")


def build_table(functional: Functional, family: ConvexityFamily, n: int, f_max: float,
                tol: float = 1e-10, prefer: str = CLOSED_FORM) -> AntiderivativeTable:
    """Assemble the F/G evaluators at b = psi_inv(f_max).

    ``prefer`` selects the evaluation path: "closed-form" uses closed forms
    wherever they exist (quadrature elsewhere), "quadrature" forces the
    generic path for every order.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if not f_max > 0:
        raise ValueError("f_max must be positive")
    if prefer not in (CLOSED_FORM, QUADRATURE):
        raise ValueError(f"unknown preference {prefer!r}")
    _check_integrable(functional, family, n)
    b = float(family.psi_inv(f_max))
    f_model = composed_integrand(functional, family)
    g_model = mass_integrand(family)

    def probe_sources(closed, model) -> tuple:
        tags = []
        for k in range(n + 1):
            if prefer == CLOSED_FORM:
                try:
                    closed(k)
                    tags.append(CLOSED_FORM)
                    continue
                except NoClosedFormError:
                    pass
            tags.append(QUADRATURE)
        return tuple(tags)

    f_source = probe_sources(lambda k: closed_form_F(functional, family, k, b), f_model)
    g_source = probe_sources(lambda k: closed_form_G(family, k, b), g_model)
    if QUADRATURE in f_source[1:] and f_model.tail is None:
        # fall back allowed, the doubling extrapolation will report failures
        pass
    return AntiderivativeTable(functional=functional, family=family, n=n, b=b,
                               f_max=float(f_max), tol=tol,
                               f_source=f_source, g_source=g_source,
                               _f_model=f_model, _g_model=g_model)
