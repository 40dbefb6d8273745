"""Convexity families, integral functionals, and concrete density specifications.

A density f on R^n belongs to a convexity family when f(x) = psi(g(x)) for
some convex g, where psi is continuous, strictly decreasing and vanishes at
infinity.  The two built-in families are the exponential kernel
psi(x) = exp(-x) (log-concave densities) and the power kernel
psi(x) = x**-beta (beta-concave densities).  Integral functionals
I(f) = integral of phi(f(x)) dx are described by :class:`Functional`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

__all__ = [
    "LOG_CONCAVE",
    "BETA_CONCAVE",
    "CUSTOM",
    "FamilyError",
    "NonIntegrableError",
    "ConvexityFamily",
    "Functional",
    "DensitySpec",
    "ExtremalLinear",
    "UniformBox",
    "QuadraticG",
    "MaxAffineG",
    "MultivariateT",
    "GaussianForm",
    "make_family",
    "make_functional",
    "make_extremal_linear",
    "make_uniform_box",
    "make_quadratic_g",
    "make_max_affine_g",
    "make_multivariate_t",
    "make_gaussian",
    "density_eval",
    "density_eval_many",
    "g_eval",
    "g_eval_many",
    "mode_point",
    "sampling_window",
    "absorb_mass",
    "segment_convexity_violations",
]

LOG_CONCAVE = "log-concave"
BETA_CONCAVE = "beta-concave"
CUSTOM = "custom"


class FamilyError(ValueError):
    """Invalid family, functional, or density-spec parameters."""


class NonIntegrableError(FamilyError):
    """The requested construction has a divergent integral (e.g. beta <= n)."""


@dataclass(frozen=True)
class ConvexityFamily:
    """Decreasing kernel psi with its inverse and optional repeated antiderivatives.

    ``gk_provider(k, x)`` returns the k-fold repeated tail integral of psi at x
    (the order-0 value being psi itself), when a closed form is known.
    """

    kind: str
    psi: Callable
    psi_inv: Callable
    domain_left: float
    beta: float | None = None
    gk_provider: Callable[[int, float], float] | None = None


def _gk_log_concave(k: int, x: float) -> float:
    return math.exp(-x)


def _make_gk_beta(beta: float) -> Callable[[int, float], float]:
    def gk(k: int, x: float) -> float:
        if beta <= k:
            raise NonIntegrableError(
                f"order-{k} antiderivative of the power kernel needs beta > {k}, got beta={beta}"
            )
        denom = 1.0
        for i in range(1, k + 1):
            denom *= beta - i
        return x ** (k - beta) / denom

    return gk


def make_family(kind: str, beta: float | None = None, *, psi=None, psi_inv=None,
                domain_left: float | None = None, gk_provider=None) -> ConvexityFamily:
    """Build a convexity family; custom kernels are spot-checked on a grid."""
    if kind == LOG_CONCAVE:
        return ConvexityFamily(
            kind=LOG_CONCAVE,
            psi=lambda x: np.exp(-np.asarray(x, dtype=float)),
            psi_inv=lambda y: -np.log(np.asarray(y, dtype=float)),
            domain_left=-math.inf,
            gk_provider=_gk_log_concave,
        )
    if kind == BETA_CONCAVE:
        if beta is None or not beta > 0:
            raise FamilyError(f"beta-concave family needs beta > 0, got {beta}")
        b = float(beta)
        return ConvexityFamily(
            kind=BETA_CONCAVE,
            psi=lambda x: np.asarray(x, dtype=float) ** (-b),
            psi_inv=lambda y: np.asarray(y, dtype=float) ** (-1.0 / b),
            domain_left=0.0,
            beta=b,
            gk_provider=_make_gk_beta(b),
        )
    if kind == CUSTOM:
        if psi is None or psi_inv is None:
            raise FamilyError("custom family requires both psi and psi_inv")
        a = -math.inf if domain_left is None else float(domain_left)
        fam = ConvexityFamily(kind=CUSTOM, psi=psi, psi_inv=psi_inv,
                              domain_left=a, gk_provider=gk_provider)
        _spot_check_custom(fam)
        return fam
    raise FamilyError(f"unknown family kind {kind!r}")


def _spot_check_custom(fam: ConvexityFamily) -> None:
    if math.isfinite(fam.domain_left):
        xs = fam.domain_left + np.geomspace(1e-3, 60.0, 48)
    else:
        xs = np.linspace(-25.0, 60.0, 48)
    vals = np.array([float(fam.psi(x)) for x in xs])
    if not np.all(vals > 0):
        raise FamilyError("custom psi must be positive on its domain")
    if not np.all(np.diff(vals) < 0):
        raise FamilyError("custom psi failed the strict-decrease spot check")
    if vals[-1] > 1e-3 * vals[0]:
        raise FamilyError("custom psi does not appear to vanish at infinity")
    for x, v in zip(xs, vals):
        back = float(fam.psi_inv(v))
        if abs(back - x) > 1e-6 * max(1.0, abs(x)):
            raise FamilyError(
                f"custom psi_inv(psi(x)) != x at x={x:.6g} (got {back:.6g})")


ENTROPY = "entropy"
RENYI = "renyi"
TRUNCATION = "truncation"


@dataclass(frozen=True)
class Functional:
    """Integrand kernel phi (absolutely continuous, phi(0)=0) and its a.e. derivative."""

    kind: str
    phi: Callable
    phi_prime: Callable
    alpha: float | None = None
    t: float | None = None


def _entropy_phi(x):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -safe * np.log(safe), 0.0)


def make_functional(kind: str, *, alpha: float | None = None, t: float | None = None,
                    phi=None, phi_prime=None) -> Functional:
    if kind == ENTROPY:
        return Functional(
            kind=ENTROPY,
            phi=_entropy_phi,
            phi_prime=lambda x: -np.log(np.asarray(x, dtype=float)) - 1.0,
        )
    if kind == RENYI:
        if alpha is None or not alpha > 0 or alpha == 1:
            raise FamilyError(f"Renyi functional needs alpha > 0, alpha != 1, got {alpha}")
        a = float(alpha)
        return Functional(
            kind=RENYI,
            phi=lambda x: np.asarray(x, dtype=float) ** a,
            phi_prime=lambda x: a * np.asarray(x, dtype=float) ** (a - 1.0),
            alpha=a,
        )
    if kind == TRUNCATION:
        if t is None or not t > 0:
            raise FamilyError(f"truncation functional needs t > 0, got {t}")
        tt = float(t)
        return Functional(
            kind=TRUNCATION,
            phi=lambda x: np.minimum(np.asarray(x, dtype=float), tt),
            phi_prime=lambda x: np.where(np.asarray(x, dtype=float) < tt, 1.0, 0.0),
            t=tt,
        )
    if kind == CUSTOM:
        if phi is None or phi_prime is None:
            raise FamilyError("custom functional requires phi and phi_prime")
        if abs(float(phi(0.0))) > 1e-12:
            raise FamilyError("custom phi must satisfy phi(0) = 0")
        return Functional(kind=CUSTOM, phi=phi, phi_prime=phi_prime)
    raise FamilyError(f"unknown functional kind {kind!r}")


# ---------------------------------------------------------------------------
# Density forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtremalLinear:
    """f(x) = psi(b + lam * sum(x)) on the closed nonnegative orthant."""

    b: float
    lam: float


@dataclass(frozen=True)
class UniformBox:
    """Constant density f_max on the box [0, f_max**(-1/n)]^n."""


@dataclass(frozen=True, eq=False)
class QuadraticG:
    """g(x) = x' Q x + offset with Q positive definite."""

    matrix: np.ndarray
    offset: float


@dataclass(frozen=True, eq=False)
class MaxAffineG:
    """g(x) = max_j (slopes[j] . x + intercepts[j])."""

    slopes: np.ndarray
    intercepts: np.ndarray


@dataclass(frozen=True, eq=False)
class MultivariateT:
    """Student-t with dof nu and scale matrix sigma; power-family with beta=(nu+n)/2."""

    nu: float
    sigma: np.ndarray


@dataclass(frozen=True, eq=False)
class GaussianForm:
    """Centered Gaussian with covariance sigma (log-concave)."""

    sigma: np.ndarray


@dataclass(frozen=True, eq=False)
class DensitySpec:
    """A concrete density from a convexity family, with cached sup-norm."""

    family: ConvexityFamily
    n: int
    form: object
    f_max: float


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=float)
    a.setflags(write=False)
    return a


# -- constructors -----------------------------------------------------------

def make_extremal_linear(family: ConvexityFamily, n: int, f_max: float) -> DensitySpec:
    """Orthant density psi(b + lam*sum(x)) normalized by lam = G_n(b)**(1/n).

    Attains the order-n candidate value of the bound bracket for every
    functional.  Raises :class:`NonIntegrableError` when the family's order-n
    antiderivative does not exist (power kernel with beta <= n).
    """
    if n < 1:
        raise FamilyError("dimension must be >= 1")
    if not f_max > 0:
        raise FamilyError("f_max must be positive")
    if family.kind == BETA_CONCAVE and family.beta <= n:
        raise NonIntegrableError(
            f"orthant extremal needs beta > n (got beta={family.beta}, n={n})")
    b = float(family.psi_inv(f_max))
    if family.gk_provider is not None:
        gn = float(family.gk_provider(n, b))
    else:
        from .antiderivatives import cauchy_repeated_integral, mass_integrand
        gn = cauchy_repeated_integral(mass_integrand(family), n, b, tol=1e-12)
    if not (math.isfinite(gn) and gn > 0):
        raise NonIntegrableError(f"order-{n} mass antiderivative not finite at b={b}")
    lam = gn ** (1.0 / n)
    return DensitySpec(family=family, n=n, form=ExtremalLinear(b=b, lam=lam),
                       f_max=float(family.psi(b)))


def make_uniform_box(family: ConvexityFamily, n: int, f_max: float) -> DensitySpec:
    if n < 1:
        raise FamilyError("dimension must be >= 1")
    if not f_max > 0:
        raise FamilyError("f_max must be positive")
    return DensitySpec(family=family, n=n, form=UniformBox(), f_max=float(f_max))


def make_quadratic_g(family: ConvexityFamily, n: int, matrix, offset: float) -> DensitySpec:
    """Elliptical density psi(x'Qx + offset); not normalized until mass is absorbed."""
    q = _frozen(matrix)
    if q.shape != (n, n):
        raise FamilyError(f"matrix must be {n}x{n}")
    try:
        np.linalg.cholesky(q)
    except np.linalg.LinAlgError as exc:
        raise FamilyError("quadratic form matrix must be positive definite") from exc
    if family.kind != LOG_CONCAVE and not offset > family.domain_left:
        raise FamilyError("offset must exceed the kernel's left domain endpoint")
    return DensitySpec(family=family, n=n, form=QuadraticG(matrix=q, offset=float(offset)),
                       f_max=float(family.psi(offset)))


def make_max_affine_g(family: ConvexityFamily, n: int, slopes, intercepts) -> DensitySpec:
    """Density psi(max of affine pieces); not normalized until mass is absorbed."""
    a = _frozen(slopes)
    c = _frozen(intercepts)
    if a.ndim != 2 or a.shape[1] != n or a.shape[0] != c.shape[0]:
        raise FamilyError("slopes must be (m, n) and intercepts (m,)")
    gmin, _ = _max_affine_min(a, c)
    if not gmin > family.domain_left:
        raise FamilyError("max-affine g must stay above the kernel's left endpoint")
    # growth in every direction, otherwise the density is not integrable
    for i in range(n):
        if a[:, i].max() <= 0 or a[:, i].min() >= 0:
            raise FamilyError("max-affine slopes must grow in both directions of every axis")
    return DensitySpec(family=family, n=n, form=MaxAffineG(slopes=a, intercepts=c),
                       f_max=float(family.psi(gmin)))


def make_multivariate_t(n: int, sigma=None, nu: float | None = None) -> DensitySpec:
    """Student-t density; default nu = 3n makes the family exponent beta = 2n an integer."""
    if nu is None:
        nu = 3.0 * n
    sig = _frozen(np.eye(n) if sigma is None else sigma)
    if sig.shape != (n, n):
        raise FamilyError(f"sigma must be {n}x{n}")
    np.linalg.cholesky(sig)
    beta = (nu + n) / 2.0
    fam = make_family(BETA_CONCAVE, beta=beta)
    f_max = _mvt_peak(nu, sig, n)
    return DensitySpec(family=fam, n=n, form=MultivariateT(nu=float(nu), sigma=sig),
                       f_max=f_max)


def make_gaussian(n: int, sigma=None) -> DensitySpec:
    sig = _frozen(np.eye(n) if sigma is None else sigma)
    if sig.shape != (n, n):
        raise FamilyError(f"sigma must be {n}x{n}")
    np.linalg.cholesky(sig)
    fam = make_family(LOG_CONCAVE)
    f_max = (2.0 * math.pi) ** (-n / 2.0) / math.sqrt(float(np.linalg.det(sig)))
    return DensitySpec(family=fam, n=n, form=GaussianForm(sigma=sig), f_max=f_max)


def _mvt_peak(nu: float, sigma: np.ndarray, n: int) -> float:
    logc = (math.lgamma((nu + n) / 2.0) - math.lgamma(nu / 2.0)
            - (n / 2.0) * math.log(nu * math.pi)
            - 0.5 * float(np.linalg.slogdet(sigma)[1]))
    return math.exp(logc)


def _max_affine_min(slopes: np.ndarray, intercepts: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimize max_j(a_j.x + c_j) exactly (linear program in (x, s))."""
    from scipy.optimize import linprog
    m, n = slopes.shape
    cvec = np.zeros(n + 1)
    cvec[-1] = 1.0
    a_ub = np.hstack([slopes, -np.ones((m, 1))])
    res = linprog(cvec, A_ub=a_ub, b_ub=-intercepts, bounds=[(None, None)] * (n + 1),
                  method="highs")
    if not res.success:
        raise FamilyError("max-affine g is unbounded below or degenerate")
    return float(res.fun), np.asarray(res.x[:n], dtype=float)


# -- evaluation --------------------------------------------------------------

def g_eval_many(spec: DensitySpec, points: np.ndarray) -> np.ndarray:
    """Convex transform values g(x) for rows of ``points``; +inf outside support."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    form = spec.form
    if isinstance(form, ExtremalLinear):
        g = form.b + form.lam * x.sum(axis=1)
        return np.where((x >= 0).all(axis=1), g, math.inf)
    if isinstance(form, UniformBox):
        side = spec.f_max ** (-1.0 / spec.n)
        inside = ((x >= 0) & (x <= side)).all(axis=1)
        b = float(spec.family.psi_inv(spec.f_max))
        return np.where(inside, b, math.inf)
    if isinstance(form, QuadraticG):
        return np.einsum("ij,jk,ik->i", x, form.matrix, x) + form.offset
    if isinstance(form, MaxAffineG):
        return (x @ form.slopes.T + form.intercepts).max(axis=1)
    if isinstance(form, MultivariateT):
        q = _mahalanobis(x, form.sigma)
        c = spec.f_max ** (-1.0 / _mvt_beta(spec))
        return c * (1.0 + q / form.nu)
    if isinstance(form, GaussianForm):
        q = _mahalanobis(x, form.sigma)
        return 0.5 * q - math.log(spec.f_max)
    raise FamilyError(f"unknown form {type(form).__name__}")


def _mahalanobis(x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    sol = np.linalg.solve(sigma, x.T)
    return np.einsum("ij,ji->i", x, sol)


def _mvt_beta(spec: DensitySpec) -> float:
    return (spec.form.nu + spec.n) / 2.0


def density_eval_many(spec: DensitySpec, points: np.ndarray) -> np.ndarray:
    """Density values f(x) for rows of ``points`` (0 outside the support)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    form = spec.form
    if isinstance(form, UniformBox):
        side = spec.f_max ** (-1.0 / spec.n)
        inside = ((x >= 0) & (x <= side)).all(axis=1)
        return np.where(inside, spec.f_max, 0.0)
    if isinstance(form, MultivariateT):
        q = _mahalanobis(x, form.sigma)
        return spec.f_max * (1.0 + q / form.nu) ** (-_mvt_beta(spec))
    if isinstance(form, GaussianForm):
        q = _mahalanobis(x, form.sigma)
        return spec.f_max * np.exp(-0.5 * q)
    g = g_eval_many(spec, x)
    out = np.zeros(g.shape)
    finite = np.isfinite(g)
    if finite.any():
        out[finite] = np.asarray(spec.family.psi(g[finite]), dtype=float)
    return out


def density_eval(spec: DensitySpec, x) -> float:
    """f(x) at a single point (scalar allowed in dimension 1)."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (spec.n,):
        raise FamilyError(f"point must have dimension {spec.n}")
    return float(density_eval_many(spec, pt[None, :])[0])


def g_eval(spec: DensitySpec, x) -> float:
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.shape != (spec.n,):
        raise FamilyError(f"point must have dimension {spec.n}")
    return float(g_eval_many(spec, pt[None, :])[0])


def mode_point(spec: DensitySpec) -> np.ndarray:
    """A point attaining the sup-norm."""
    form = spec.form
    if isinstance(form, (ExtremalLinear,)):
        return np.zeros(spec.n)
    if isinstance(form, UniformBox):
        side = spec.f_max ** (-1.0 / spec.n)
        return np.full(spec.n, side / 2.0)
    if isinstance(form, (QuadraticG, MultivariateT, GaussianForm)):
        return np.zeros(spec.n)
    if isinstance(form, MaxAffineG):
        _, x0 = _max_affine_min(form.slopes, form.intercepts)
        return x0
    raise FamilyError(f"unknown form {type(form).__name__}")


def sampling_window(spec: DensitySpec, drop: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box containing the region where f >= f_max * drop."""
    form = spec.form
    n = spec.n
    if isinstance(form, UniformBox):
        side = spec.f_max ** (-1.0 / n)
        return np.zeros(n), np.full(n, side)
    u_hi = float(spec.family.psi_inv(spec.f_max * drop))
    if isinstance(form, ExtremalLinear):
        span = max((u_hi - form.b) / form.lam, 1e-6)
        return np.zeros(n), np.full(n, span)
    if isinstance(form, QuadraticG):
        lam_min = float(np.linalg.eigvalsh(form.matrix)[0])
        r = math.sqrt(max(u_hi - form.offset, 0.0) / lam_min) + 1e-6
        return np.full(n, -r), np.full(n, r)
    if isinstance(form, MaxAffineG):
        _, x0 = _max_affine_min(form.slopes, form.intercepts)
        g0 = float((form.slopes @ x0 + form.intercepts).max())
        lo = np.empty(n)
        hi = np.empty(n)
        for i in range(n):
            up = form.slopes[:, i].max()
            dn = -form.slopes[:, i].min()
            hi[i] = x0[i] + max(u_hi - g0, 0.0) / up + 1e-6
            lo[i] = x0[i] - max(u_hi - g0, 0.0) / dn - 1e-6
        return lo, hi
    if isinstance(form, MultivariateT):
        beta = _mvt_beta(spec)
        scale = math.sqrt(float(np.diag(form.sigma).max()))
        r = math.sqrt(form.nu * max(drop ** (-1.0 / beta) - 1.0, 0.0)) * scale + 1e-6
        return np.full(n, -r), np.full(n, r)
    if isinstance(form, GaussianForm):
        scale = math.sqrt(float(np.diag(form.sigma).max()))
        r = math.sqrt(-2.0 * math.log(drop)) * scale + 1e-6
        return np.full(n, -r), np.full(n, r)
    raise FamilyError(f"unknown form {type(form).__name__}")


def absorb_mass(spec: DensitySpec, mass: float) -> DensitySpec:
    """Rescale the density by 1/mass, staying inside the same family.

    The exponential kernel absorbs a positive factor by shifting g; the power
    kernel by scaling g.  Custom kernels are rejected (no closure guarantee).
    """
    if not (math.isfinite(mass) and mass > 0):
        raise FamilyError(f"mass must be positive and finite, got {mass}")
    fam = spec.family
    form = spec.form
    if fam.kind == LOG_CONCAVE:
        shift = math.log(mass)
        if isinstance(form, QuadraticG):
            new = QuadraticG(matrix=form.matrix, offset=form.offset + shift)
            return replace(spec, form=new, f_max=float(fam.psi(new.offset)))
        if isinstance(form, MaxAffineG):
            new = MaxAffineG(slopes=form.slopes, intercepts=_frozen(form.intercepts + shift))
            gmin, _ = _max_affine_min(new.slopes, new.intercepts)
            return replace(spec, form=new, f_max=float(fam.psi(gmin)))
    elif fam.kind == BETA_CONCAVE:
        scale = mass ** (1.0 / fam.beta)
        if isinstance(form, QuadraticG):
            new = QuadraticG(matrix=_frozen(form.matrix * scale), offset=form.offset * scale)
            return replace(spec, form=new, f_max=float(fam.psi(new.offset)))
        if isinstance(form, MaxAffineG):
            new = MaxAffineG(slopes=_frozen(form.slopes * scale),
                             intercepts=_frozen(form.intercepts * scale))
            gmin, _ = _max_affine_min(new.slopes, new.intercepts)
            return replace(spec, form=new, f_max=float(fam.psi(gmin)))
    else:
        raise FamilyError("custom families are not auto-normalized")
    raise FamilyError(f"cannot absorb mass into form {type(form).__name__}")


def segment_convexity_violations(spec: DensitySpec, segments: int = 100,
                                 seed: int = 0, tol: float = 1e-9) -> int:
    """Count midpoint-convexity failures of psi_inv(f) along random segments."""
    rng = np.random.default_rng(seed)
    lo, hi = sampling_window(spec)
    bad = 0
    done = 0
    attempts = 0
    while done < segments and attempts < 50 * segments:
        attempts += 1
        a = rng.uniform(lo, hi)
        b = rng.uniform(lo, hi)
        mid = 0.5 * (a + b)
        fv = density_eval_many(spec, np.vstack([a, b, mid]))
        if np.any(fv <= 0):
            continue
        ga, gb, gm = (float(spec.family.psi_inv(v)) for v in fv)
        done += 1
        scale = max(1.0, abs(ga) + abs(gb))
        if gm > 0.5 * (ga + gb) + tol * scale:
            bad += 1
    if done < segments:
        raise FamilyError("could not sample enough in-support segments")
    return bad
