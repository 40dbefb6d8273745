"""Ground-truth numerical evaluation of density functionals.

Deterministic quadrature with certified truncation tails for low dimension
and elliptical forms of any dimension, seeded Monte Carlo for the rest,
threshold solving for truncated masses, and random generation of valid test
densities.  All Monte Carlo results are reproducible bit-for-bit from
(seed, sample_count, worker_count).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize

from .antiderivatives import (
    IntegrandModel,
    NoTailModelError,
    QuadratureConvergenceError,
    TailDecay,
    composed_integrand,
    mass_integrand,
    tail_weight_bound,
)
from .families import (
    BETA_CONCAVE,
    CUSTOM,
    LOG_CONCAVE,
    TRUNCATION,
    ConvexityFamily,
    DensitySpec,
    ExtremalLinear,
    FamilyError,
    Functional,
    GaussianForm,
    MaxAffineG,
    MultivariateT,
    QuadraticG,
    UniformBox,
    absorb_mass,
    density_eval_many,
    make_functional,
    make_max_affine_g,
    make_quadratic_g,
    mode_point,
    sampling_window,
)

__all__ = [
    "OracleBudget",
    "OracleEstimate",
    "RandomDensityConfig",
    "OracleError",
    "integrate_functional",
    "truncated_mass",
    "solve_threshold",
    "truncated_entropy",
    "generate_random_density",
    "slice_inequality_check",
    "sample_density",
    "mc_entropy",
    "DEFAULT_BUDGET",
]


class OracleError(RuntimeError):
    """The oracle could not reach its accuracy contract."""


@dataclass(frozen=True)
class OracleBudget:
    quad_tol_1d: float = 1e-8
    quad_tol_nd: float = 1e-6
    mc_samples: int = 1_000_000
    seed: int = 20260810
    workers: int = 1
    max_doublings: int = 60


DEFAULT_BUDGET = OracleBudget()


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    method: str  # "quadrature" | "monte-carlo" | "closed-form"
    abs_tol: float | None = None
    std_error: float | None = None
    sample_count: int | None = None
    seed: int | None = None
    worker_count: int | None = None
    converged: bool = True
    note: str = ""

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class RandomDensityConfig:
    family: ConvexityFamily
    n: int
    generator: str = "quadratic"  # "quadratic" | "max-affine"
    pieces: int = 6
    seed: int = 0


# ---------------------------------------------------------------------------
# Pointwise transforms of density values
# ---------------------------------------------------------------------------

def _functional_transforms(functional: Functional):
    phi = functional.phi

    def vec(fv):
        return np.asarray(phi(fv), dtype=float)

    if functional.kind == "entropy":
        def scalar(f):
            return -f * math.log(f) if f > 0.0 else 0.0
    elif functional.kind == "renyi":
        a = functional.alpha

        def scalar(f):
            return f ** a if f > 0.0 else 0.0
    elif functional.kind == TRUNCATION:
        t = functional.t

        def scalar(f):
            return f if f < t else t
    else:
        def scalar(f):
            return float(phi(f))

    return scalar, vec


def _mlogm_transforms(t: float):
    def scalar(f):
        m = f if f < t else t
        return m * math.log(m) if m > 0.0 else 0.0

    def vec(fv):
        m = np.minimum(np.asarray(fv, dtype=float), t)
        safe = np.where(m > 0, m, 1.0)
        return np.where(m > 0, safe * np.log(safe), 0.0)

    return scalar, vec


def _mlogm_model(family: ConvexityFamily, t: float) -> IntegrandModel:
    """g-space model for u -> m log m with m = min(psi(u), t)."""
    def fn(u):
        m = np.minimum(np.asarray(family.psi(u), dtype=float), t)
        safe = np.where(m > 0, m, 1.0)
        return np.where(m > 0, safe * np.log(safe), 0.0)

    kink = float(family.psi_inv(t))
    if family.kind == LOG_CONCAVE:
        return IntegrandModel(fn=fn, kinks=(kink,),
                              tail=TailDecay("exp-linear", 1.0, max(kink, 1e-9)),
                              abs_decreasing_from=max(kink, 1.0))
    if family.kind == BETA_CONCAVE:
        beta = family.beta
        return IntegrandModel(fn=fn, kinks=(kink,),
                              tail=TailDecay("power-log", beta, max(kink, math.e)),
                              abs_decreasing_from=max(kink, math.exp(1.0 / beta)))
    return IntegrandModel(fn=fn, kinks=(kink,), tail=None)


# ---------------------------------------------------------------------------
# Fast scalar density evaluation (hot loops inside quadrature)
# ---------------------------------------------------------------------------

def _scalar_psi(family: ConvexityFamily):
    if family.kind == LOG_CONCAVE:
        return lambda u: math.exp(-u)
    if family.kind == BETA_CONCAVE:
        beta = family.beta
        return lambda u: u ** (-beta)
    psi = family.psi
    return lambda u: float(psi(u))


def _scalar_density_1d(spec: DensitySpec):
    """Fast f(x) for one-dimensional specs."""
    psi = _scalar_psi(spec.family)
    form = spec.form
    if isinstance(form, ExtremalLinear):
        b, lam = form.b, form.lam
        return lambda x: psi(b + lam * x) if x >= 0.0 else 0.0
    if isinstance(form, MaxAffineG):
        a = form.slopes[:, 0].copy()
        c = form.intercepts.copy()
        return lambda x: psi(float(np.max(a * x + c)))
    raise OracleError(f"no 1-d scalar path for {type(form).__name__}")


def _scalar_density_2d(spec: DensitySpec):
    psi = _scalar_psi(spec.family)
    form = spec.form
    if isinstance(form, ExtremalLinear):
        b, lam = form.b, form.lam
        return lambda x, y: psi(b + lam * (x + y)) if (x >= 0.0 and y >= 0.0) else 0.0
    if isinstance(form, MaxAffineG):
        ax = form.slopes[:, 0].copy()
        ay = form.slopes[:, 1].copy()
        c = form.intercepts.copy()
        return lambda x, y: psi(float(np.max(ax * x + ay * y + c)))
    raise OracleError(f"no 2-d scalar path for {type(form).__name__}")


# ---------------------------------------------------------------------------
# Quadrature routes
# ---------------------------------------------------------------------------

def _quad(fn, a, b, points, epsabs):
    pts = sorted(p for p in points if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(fn, a, b, points=pts or None, epsabs=epsabs,
                                epsrel=1e-11, limit=500)
    return val


def _grow_cut(model: IntegrandModel, n: int, origin: float, start_off: float,
              lam: float, tol: float, max_doublings: int) -> tuple[float, float]:
    """Smallest doubling cut u >= origin + start_off with weighted tail below tol.

    Returns (u_cut, tail_bound); the weight order is n with origin ``origin``
    and the x-space scale factor lam**-n is applied by the caller.
    """
    u = origin + start_off
    if model.tail is not None and math.isfinite(model.tail.valid_from):
        u = max(u, model.tail.valid_from)
    for _ in range(max_doublings):
        try:
            bound = tail_weight_bound(model, n, origin, u) * math.factorial(n - 1) / lam ** n
        except NoTailModelError:
            bound = math.inf
        if bound <= tol:
            return u, bound
        u = origin + 2.0 * (u - origin)
    raise QuadratureConvergenceError("tail bound did not converge while growing the window")


def _orthant_quad(spec: DensitySpec, scalar_tf, model: IntegrandModel,
                  tol: float, budget: OracleBudget) -> tuple[float, float]:
    """Integral of tf(f) over the nonnegative orthant for the linear extremal form."""
    form = spec.form
    b, lam, n = form.b, form.lam, spec.n
    start_off = max([1.0] + [k - b for k in model.kinks if k > b])
    u_cut, tail = _grow_cut(model, n, b, start_off, lam, tol / 2.0, budget.max_doublings)
    x_cut = (u_cut - b) / lam
    x_kinks = [(k - b) / lam for k in model.kinks if k > b]
    if n == 1:
        f1 = _scalar_density_1d(spec)
        val = _quad(lambda x: scalar_tf(f1(x)), 0.0, x_cut, x_kinks, tol / 2.0)
        return val, tail + tol / 2.0
    if n == 2:
        f2 = _scalar_density_2d(spec)

        def inner_opts(x):
            return {"points": [k - x for k in x_kinks if 0.0 < k - x < x_cut],
                    "epsabs": tol / (4.0 * (x_cut + 1.0)), "limit": 200}

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.nquad(lambda y, x: scalar_tf(f2(x, y)),
                                     [[0.0, x_cut], [0.0, x_cut]],
                                     opts=[inner_opts, {"epsabs": tol / 4.0, "limit": 200,
                                                        "points": x_kinks}])
        return val, tail + tol / 2.0
    raise OracleError("orthant quadrature supports n <= 2 only")


def _radial_map(spec: DensitySpec) -> tuple[float, float, float, np.ndarray]:
    """(a, c, detfac, direction): g(r * direction) = a r^2 + c in whitened radius."""
    form = spec.form
    n = spec.n
    if isinstance(form, QuadraticG):
        lt = np.linalg.cholesky(form.matrix).T
        direction = np.linalg.solve(lt, np.eye(n)[:, 0])
        detfac = float(np.prod(1.0 / np.diag(lt)))
        return 1.0, form.offset, abs(detfac), direction
    if isinstance(form, MultivariateT):
        l = np.linalg.cholesky(form.sigma)
        direction = l @ np.eye(n)[:, 0]
        detfac = float(np.prod(np.diag(l)))
        beta = (form.nu + n) / 2.0
        c_g = spec.f_max ** (-1.0 / beta)
        return c_g / form.nu, c_g, abs(detfac), direction
    if isinstance(form, GaussianForm):
        l = np.linalg.cholesky(form.sigma)
        direction = l @ np.eye(n)[:, 0]
        detfac = float(np.prod(np.diag(l)))
        return 0.5, -math.log(spec.f_max), abs(detfac), direction
    raise OracleError(f"{type(form).__name__} is not elliptical")


def _is_elliptical(spec: DensitySpec) -> bool:
    return isinstance(spec.form, (QuadraticG, MultivariateT, GaussianForm))


def _sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _exp_scaled_gamma(s: float, z: float) -> float:
    """exp(z) * Gamma(s, z) for s a positive integer or half-integer."""
    if abs(s - round(s)) < 1e-12:
        m = int(round(s))
        acc = 1.0
        t = 1.0
        for j in range(1, m):
            t *= z / j
            acc += t
        return math.factorial(m - 1) * acc
    from scipy.special import erfcx
    # half-integer: recursion from Gamma(1/2, z) = sqrt(pi) erfc(sqrt(z))
    val = math.sqrt(math.pi) * erfcx(math.sqrt(z))
    s_cur = 0.5
    while s_cur + 1.0 <= s + 1e-12:
        val = s_cur * val + z ** s_cur
        s_cur += 1.0
    return val


def _radial_tail_bound(model: IntegrandModel, n: int, a: float, c: float, r_cut: float) -> float:
    """Upper bound on int_R^inf |h(a r^2 + c)| r^(n-1) dr from the decay majorant."""
    tail = model.tail
    if tail is None:
        raise NoTailModelError("no decay majorant for radial tail")
    u_r = a * r_cut ** 2 + c
    if u_r < tail.valid_from:
        raise NoTailModelError("radial cut below the envelope validity point")
    habs = abs(float(model.fn(u_r)))
    if tail.kind == "exp":
        rho = tail.rate
        z = rho * a * r_cut ** 2
        return habs * 0.5 * (rho * a) ** (-n / 2.0) * _exp_scaled_gamma(n / 2.0, z)
    if tail.kind == "exp-linear":
        if u_r <= 0:
            raise NoTailModelError("exp-linear envelope needs positive argument")
        rho = tail.rate
        z = rho * a * r_cut ** 2
        i_hi = 0.5 * (rho * a) ** (-(n + 2) / 2.0) * _exp_scaled_gamma((n + 2) / 2.0, z)
        i_lo = 0.5 * (rho * a) ** (-n / 2.0) * _exp_scaled_gamma(n / 2.0, z)
        return max(habs / u_r * (a * i_hi + c * i_lo), 0.0)
    if tail.kind == "power":
        q = tail.rate
        if 2.0 * q <= n:
            raise NoTailModelError("power decay too slow for the radial weight")
        return habs * u_r ** q * a ** (-q) * r_cut ** (n - 2 * q) / (2 * q - n)
    if tail.kind == "power-log":
        q = tail.rate
        if 2.0 * q <= n:
            raise NoTailModelError("power decay too slow for the radial weight")
        if u_r <= 1.0 or c < 0:
            raise NoTailModelError("power-log radial bound needs u > 1 and c >= 0")
        coeff = habs * u_r ** q / math.log(u_r) * a ** (-q)
        j_plain = r_cut ** (n - 2 * q) / (2 * q - n)
        j_log = r_cut ** (n - 2 * q) * ((2 * q - n) * math.log(r_cut) + 1.0) / (2 * q - n) ** 2
        c1 = math.log(a) + math.log1p(c / (a * r_cut ** 2))
        return max(coeff * (2.0 * j_log + c1 * j_plain), 0.0)
    raise NoTailModelError(f"unknown tail kind {tail.kind!r}")


def _radial_quad(spec: DensitySpec, scalar_tf, model: IntegrandModel,
                 tol: float, budget: OracleBudget) -> tuple[float, float]:
    """detfac * area(S^{n-1}) * int_0^inf tf(f(r)) r^(n-1) dr for elliptical forms."""
    a, c, detfac, direction = _radial_map(spec)
    n = spec.n
    area = _sphere_area(n)
    outer = detfac * area
    kink_radii = [math.sqrt((k - c) / a) for k in model.kinks if k > c]
    r0 = max(1.0, *(kink_radii or [1.0]))
    if model.tail is not None and math.isfinite(model.tail.valid_from):
        r_need = math.sqrt(max(model.tail.valid_from - c, 0.0) / a)
        r0 = max(r0, r_need, 1e-3)
    r_cut = r0
    tail = math.inf
    for _ in range(budget.max_doublings):
        try:
            tail = _radial_tail_bound(model, n, a, c, r_cut) * outer
        except NoTailModelError:
            tail = math.inf
        if tail <= tol / 2.0:
            break
        r_cut *= 2.0
    else:
        raise QuadratureConvergenceError("radial tail bound did not converge")
    psi = _scalar_psi(spec.family)

    def w(r):
        return scalar_tf(psi(a * r * r + c)) * r ** (n - 1)

    val = _quad(w, 0.0, r_cut, kink_radii, tol / (2.0 * outer))
    return outer * val, tail + tol / 2.0


def _line_quad_maxaffine(spec: DensitySpec, scalar_tf, model: IntegrandModel,
                         tol: float, budget: OracleBudget) -> tuple[float, float]:
    """Integral of tf(f) over the real line for one-dimensional max-affine g."""
    form = spec.form
    slopes = form.slopes[:, 0]
    inters = form.intercepts
    f1 = _scalar_density_1d(spec)
    x0 = float(mode_point(spec)[0])
    g0 = float(np.max(slopes * x0 + inters))
    a_up = float(slopes.max())
    a_dn = float(-slopes.min())
    j_up = int(np.argmax(slopes))
    j_dn = int(np.argmin(slopes))

    def g_lower_right(x_cut):
        return slopes[j_up] * x_cut + inters[j_up]

    def g_lower_left(x_cut):
        return slopes[j_dn] * x_cut + inters[j_dn]

    need = model.abs_decreasing_from
    if model.tail is not None and math.isfinite(model.tail.valid_from):
        need = max(need, model.tail.valid_from)
    if not math.isfinite(need):
        raise OracleError("max-affine quadrature needs a certified decay model")
    span = 1.0
    for _ in range(budget.max_doublings):
        xr, xl = x0 + span, x0 - span
        ur, ul = g_lower_right(xr), g_lower_left(xl)
        if ur >= need and ul >= need:
            t_r = tail_weight_bound(model, 1, ur - 1.0, ur) / a_up
            t_l = tail_weight_bound(model, 1, ul - 1.0, ul) / a_dn
            if t_r + t_l <= tol / 2.0:
                tail = t_r + t_l
                break
        span *= 2.0
    else:
        raise QuadratureConvergenceError("line tail bound did not converge")
    # kinks: active-piece switches plus threshold-level crossings
    pts = []
    m = len(slopes)
    for i in range(m):
        for j in range(i + 1, m):
            if slopes[i] != slopes[j]:
                x = (inters[j] - inters[i]) / (slopes[i] - slopes[j])
                if xl < x < xr:
                    pts.append(float(x))
    for u_k in model.kinks:
        for lo, hi in ((x0, xr), (xl, x0)):
            gl = float(np.max(slopes * lo + inters))
            gh = float(np.max(slopes * hi + inters))
            lo_v, hi_v = sorted((gl, gh))
            if lo_v < u_k < hi_v:
                sol = optimize.brentq(
                    lambda x: float(np.max(slopes * x + inters)) - u_k, lo, hi)
                pts.append(float(sol))
    val = _quad(lambda x: scalar_tf(f1(x)), xl, xr, pts, tol / 2.0)
    return val, tail + tol / 2.0


def _plane_quad_maxaffine(spec: DensitySpec, scalar_tf, model: IntegrandModel,
                          tol: float, budget: OracleBudget) -> tuple[float, float]:
    """Integral of tf(f) over the plane for two-dimensional max-affine g."""
    form = spec.form
    slopes, inters = form.slopes, form.intercepts
    f2 = _scalar_density_2d(spec)
    x0 = mode_point(spec)
    g0 = float(np.max(slopes @ x0 + inters))

    def g_at(p):
        return float(np.max(slopes @ p + inters))

    def edge_min(p_from, p_to):
        res = optimize.minimize_scalar(
            lambda t: g_at(p_from + t * (p_to - p_from)), bounds=(0.0, 1.0),
            method="bounded", options={"xatol": 1e-10})
        return float(res.fun)

    need = model.abs_decreasing_from
    if model.tail is not None and math.isfinite(model.tail.valid_from):
        need = max(need, model.tail.valid_from)
    span = 1.0
    for _ in range(budget.max_doublings):
        corners = [x0 + np.array(d) * span for d in
                   ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        delta = min(edge_min(corners[i], corners[(i + 1) % 4]) for i in range(4)) - g0
        if delta > 0 and g0 + delta >= need:
            vol = (2.0 * span) ** 2
            tail = (2.0 * vol / delta ** 2
                    * tail_weight_bound(model, 2, g0, g0 + delta) * math.factorial(1))
            if tail <= tol / 2.0:
                break
        span *= 2.0
    else:
        raise QuadratureConvergenceError("plane tail bound did not converge")
    xl, xr = x0[0] - span, x0[0] + span
    yl, yr = x0[1] - span, x0[1] + span

    ridge = []  # (x-coefficient, constant) for y-locations of piece switches
    m = len(inters)
    for i in range(m):
        for j in range(i + 1, m):
            dy = slopes[i, 1] - slopes[j, 1]
            if abs(dy) > 1e-12:
                ridge.append(((slopes[j, 0] - slopes[i, 0]) / dy,
                              (inters[j] - inters[i]) / dy))

    u_kinks = tuple(model.kinks)

    def inner_opts(x):
        pts = [a * x + b for a, b in ridge if yl < a * x + b < yr]
        for u_k in u_kinks:
            gv = lambda y: float(np.max(slopes[:, 0] * x + slopes[:, 1] * y + inters)) - u_k
            ym = float(np.clip(x0[1], yl, yr))
            if gv(ym) < 0:
                if gv(yr) > 0:
                    pts.append(float(optimize.brentq(gv, ym, yr)))
                if gv(yl) > 0:
                    pts.append(float(optimize.brentq(gv, yl, ym)))
        return {"points": sorted(pts), "epsabs": tol / (8.0 * span), "limit": 200}

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.nquad(lambda y, x: scalar_tf(f2(x, y)),
                                 [[yl, yr], [xl, xr]],
                                 opts=[inner_opts, {"epsabs": tol / 4.0, "limit": 200}])
    return val, tail + tol / 2.0


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _streams(seed: int, workers: int):
    root = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(workers)]


def _worker_counts(total: int, workers: int):
    base, extra = divmod(total, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


class _Proposal:
    def __init__(self, sampler, logpdf, label):
        self.sample = sampler
        self.logpdf = logpdf
        self.label = label


def _uniform_proposal(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    logvol = float(np.sum(np.log(hi - lo)))
    return _Proposal(lambda rng, m: rng.uniform(lo, hi, (m, lo.size)),
                     lambda x: np.full(x.shape[0], -logvol), "uniform-box")


def _product_exponential_proposal(rate, n):
    lograte = math.log(rate)
    return _Proposal(lambda rng, m: rng.exponential(1.0 / rate, (m, n)),
                     lambda x: n * lograte - rate * x.sum(axis=1), "product-exponential")


def _product_lomax_proposal(shape, scale, n):
    logc = math.log(shape / scale)

    def sampler(rng, m):
        u = rng.random((m, n))
        return scale * ((1.0 - u) ** (-1.0 / shape) - 1.0)

    def logpdf(x):
        return n * logc - (shape + 1.0) * np.log1p(x / scale).sum(axis=1)

    return _Proposal(sampler, logpdf, "product-lomax")


def _gaussian_proposal(cov, center=None):
    n = cov.shape[0]
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    l = np.linalg.cholesky(cov)
    logdet = 2.0 * float(np.sum(np.log(np.diag(l))))
    const = -0.5 * (n * math.log(2.0 * math.pi) + logdet)

    def sampler(rng, m):
        return center + rng.standard_normal((m, n)) @ l.T

    def logpdf(x):
        d = x - center
        sol = np.linalg.solve(l, d.T)
        return const - 0.5 * np.einsum("ij,ij->j", sol, sol)

    return _Proposal(sampler, logpdf, "gaussian")


def _mvt_proposal(dof, cov, center=None):
    n = cov.shape[0]
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    l = np.linalg.cholesky(cov)
    logdet = 2.0 * float(np.sum(np.log(np.diag(l))))
    const = (math.lgamma((dof + n) / 2.0) - math.lgamma(dof / 2.0)
             - 0.5 * n * math.log(dof * math.pi) - 0.5 * logdet)

    def sampler(rng, m):
        z = rng.standard_normal((m, n)) @ l.T
        w = rng.chisquare(dof, m) / dof
        return center + z / np.sqrt(w)[:, None]

    def logpdf(x):
        d = x - center
        sol = np.linalg.solve(l, d.T)
        q = np.einsum("ij,ij->j", sol, sol)
        return const - 0.5 * (dof + n) * np.log1p(q / dof)

    return _Proposal(sampler, logpdf, f"multivariate-t(dof={dof:g})")


def _proposal_for(spec: DensitySpec) -> _Proposal:
    form = spec.form
    fam = spec.family
    n = spec.n
    if isinstance(form, UniformBox):
        lo, hi = sampling_window(spec)
        return _uniform_proposal(lo, hi)
    if isinstance(form, ExtremalLinear):
        if fam.kind == LOG_CONCAVE:
            return _product_exponential_proposal(form.lam / 2.0, n)
        if fam.kind == BETA_CONCAVE:
            shape = fam.beta / n - 1.0
            if shape <= 0:
                raise OracleError("orthant proposal needs beta > n")
            scale = max(form.b, 1.0) / form.lam
            return _product_lomax_proposal(shape, scale, n)
    if isinstance(form, GaussianForm):
        return _gaussian_proposal(form.sigma)
    if isinstance(form, MultivariateT):
        return _mvt_proposal(max(form.nu - 1.0, 0.5), form.sigma)
    if isinstance(form, QuadraticG):
        if fam.kind == LOG_CONCAVE:
            return _gaussian_proposal(np.linalg.inv(2.0 * form.matrix))
        cov = form.offset * np.linalg.inv(form.matrix)
        dof = min(3.0, 2.0 * fam.beta - n - 0.5)
        return _mvt_proposal(max(dof, 0.4), cov)
    if isinstance(form, MaxAffineG):
        lo, hi = sampling_window(spec, drop=math.exp(-2.0))
        center = mode_point(spec)
        cov = np.diag(np.maximum((hi - lo) / 4.0, 1e-3) ** 2)
        if fam.kind == LOG_CONCAVE:
            dof = 3.0
        else:
            dof = max(0.3, min(3.0, fam.beta - n - 0.2))
        return _mvt_proposal(dof, cov, center)
    raise OracleError(f"no Monte Carlo proposal for {type(form).__name__}")


def _mc_integrate(spec: DensitySpec, transform_vec, budget: OracleBudget) -> OracleEstimate:
    proposal = _proposal_for(spec)
    rngs = _streams(budget.seed, budget.workers)
    counts = _worker_counts(budget.mc_samples, budget.workers)
    sums = []
    sqsums = []
    for rng, m in zip(rngs, counts):
        if m == 0:
            continue
        x = proposal.sample(rng, m)
        fv = density_eval_many(spec, x)
        w = transform_vec(fv) * np.exp(-proposal.logpdf(x))
        sums.append(float(np.sum(w)))
        sqsums.append(float(np.sum(w * w)))
    total = math.fsum(sums)
    total_sq = math.fsum(sqsums)
    m = budget.mc_samples
    mean = total / m
    var = max(total_sq - m * mean * mean, 0.0) / max(m - 1, 1)
    return OracleEstimate(value=mean, method="monte-carlo",
                          std_error=math.sqrt(var / m), sample_count=m,
                          seed=budget.seed, worker_count=budget.workers,
                          note=f"proposal={proposal.label}")


# ---------------------------------------------------------------------------
# Native density samplers
# ---------------------------------------------------------------------------

def _inverse_cdf_grid(pdf, lo: float, hi: float, size: int = 8193):
    xs = np.linspace(lo, hi, size)
    ps = np.asarray(pdf(xs), dtype=float)
    ps = np.maximum(ps, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum((ps[1:] + ps[:-1]) * 0.5 * np.diff(xs))])
    if cdf[-1] <= 0:
        raise OracleError("degenerate pushforward density")
    cdf /= cdf[-1]
    return xs, cdf


def _sample_worker(spec: DensitySpec, m: int, rng) -> np.ndarray:
    form = spec.form
    fam = spec.family
    n = spec.n
    if isinstance(form, UniformBox):
        side = spec.f_max ** (-1.0 / n)
        return rng.uniform(0.0, side, (m, n))
    if isinstance(form, GaussianForm):
        l = np.linalg.cholesky(form.sigma)
        return rng.standard_normal((m, n)) @ l.T
    if isinstance(form, MultivariateT):
        l = np.linalg.cholesky(form.sigma)
        z = rng.standard_normal((m, n)) @ l.T
        w = rng.chisquare(form.nu, m) / form.nu
        return z / np.sqrt(w)[:, None]
    if isinstance(form, ExtremalLinear):
        b, lam = form.b, form.lam
        model = mass_integrand(fam)
        hi = 1.0
        for _ in range(200):
            if tail_weight_bound(model, n, b, b + hi) < 1e-13:
                break
            hi *= 2.0
        xs, cdf = _inverse_cdf_grid(
            lambda s: s ** (n - 1) * np.asarray(fam.psi(b + s), dtype=float), 0.0, hi)
        s = np.interp(rng.random(m), cdf, xs)
        e = rng.exponential(1.0, (m, n))
        frac = e / e.sum(axis=1)[:, None]
        return (s / lam)[:, None] * frac
    if isinstance(form, QuadraticG) and fam.kind == LOG_CONCAVE:
        cov = np.linalg.inv(2.0 * form.matrix)
        l = np.linalg.cholesky(cov)
        return rng.standard_normal((m, n)) @ l.T
    if isinstance(form, QuadraticG) and fam.kind == BETA_CONCAVE:
        beta = fam.beta
        c = form.offset
        hi = 1.0
        while hi ** (n - 2 * beta) / max(2 * beta - n, 1e-9) > 1e-13 and hi < 1e12:
            hi *= 2.0
        xs, cdf = _inverse_cdf_grid(
            lambda r: r ** (n - 1) * (r * r + c) ** (-beta), 0.0, hi)
        r = np.interp(rng.random(m), cdf, xs)
        z = rng.standard_normal((m, n))
        z /= np.linalg.norm(z, axis=1)[:, None]
        lt = np.linalg.cholesky(form.matrix).T
        return r[:, None] * np.linalg.solve(lt, z.T).T
    raise OracleError(f"no native sampler for {type(form).__name__}")


def sample_density(spec: DensitySpec, count: int, seed: int, workers: int = 1) -> np.ndarray:
    """Draw ``count`` points from the density; deterministic in (seed, count, workers)."""
    rngs = _streams(seed, workers)
    counts = _worker_counts(count, workers)
    parts = [_sample_worker(spec, m, rng) for rng, m in zip(rngs, counts) if m > 0]
    return np.vstack(parts)


def mc_entropy(spec: DensitySpec, budget: OracleBudget | None = None) -> OracleEstimate:
    """Differential entropy as -mean(log f) over native samples of f."""
    budget = budget or DEFAULT_BUDGET
    rngs = _streams(budget.seed, budget.workers)
    counts = _worker_counts(budget.mc_samples, budget.workers)
    sums = []
    sqsums = []
    for rng, m in zip(rngs, counts):
        if m == 0:
            continue
        x = _sample_worker(spec, m, rng)
        v = -np.log(density_eval_many(spec, x))
        sums.append(float(np.sum(v)))
        sqsums.append(float(np.sum(v * v)))
    m = budget.mc_samples
    mean = math.fsum(sums) / m
    var = max(math.fsum(sqsums) - m * mean * mean, 0.0) / max(m - 1, 1)
    return OracleEstimate(value=mean, method="monte-carlo",
                          std_error=math.sqrt(var / m), sample_count=m,
                          seed=budget.seed, worker_count=budget.workers,
                          note="native-sampler entropy")


# ---------------------------------------------------------------------------
# Public oracle operations
# ---------------------------------------------------------------------------

def _integrate(spec: DensitySpec, scalar_tf, transform_vec, model: IntegrandModel,
               budget: OracleBudget, method: str, value_at_peak) -> OracleEstimate:
    n = spec.n
    form = spec.form
    if method == "auto":
        if isinstance(form, UniformBox) or _is_elliptical(spec) or n <= 2:
            method = "quadrature"
        else:
            method = "monte-carlo"
    if method == "monte-carlo":
        return _mc_integrate(spec, transform_vec, budget)
    if method != "quadrature":
        raise OracleError(f"unknown method {method!r}")
    if isinstance(form, UniformBox):
        # constant integrand on a box of volume 1/f_max
        val = value_at_peak / spec.f_max
        return OracleEstimate(value=val, method="quadrature",
                              abs_tol=4.0 * abs(val) * np.finfo(float).eps,
                              note="constant on a box")
    tol = budget.quad_tol_1d if (n == 1 or _is_elliptical(spec)) else budget.quad_tol_nd
    try:
        if _is_elliptical(spec):
            val, err = _radial_quad(spec, scalar_tf, model, tol, budget)
        elif isinstance(form, ExtremalLinear):
            val, err = _orthant_quad(spec, scalar_tf, model, tol, budget)
        elif isinstance(form, MaxAffineG) and n == 1:
            val, err = _line_quad_maxaffine(spec, scalar_tf, model, tol, budget)
        elif isinstance(form, MaxAffineG) and n == 2:
            val, err = _plane_quad_maxaffine(spec, scalar_tf, model, tol, budget)
        else:
            raise OracleError(
                f"no quadrature route for {type(form).__name__} at n={n}")
    except QuadratureConvergenceError as exc:
        raise OracleError(f"quadrature budget exhausted: {exc}") from exc
    return OracleEstimate(value=val, method="quadrature", abs_tol=err)


def integrate_functional(spec: DensitySpec, functional: Functional,
                         budget: OracleBudget | None = None,
                         method: str = "auto") -> OracleEstimate:
    """Estimate of the integral of phi(f(x)) with reported accuracy."""
    budget = budget or DEFAULT_BUDGET
    scalar_tf, vec_tf = _functional_transforms(functional)
    model = composed_integrand(functional, spec.family)
    return _integrate(spec, scalar_tf, vec_tf, model, budget, method,
                      value_at_peak=scalar_tf(spec.f_max))


def truncated_mass(spec: DensitySpec, t: float, budget: OracleBudget | None = None,
                   method: str = "auto") -> OracleEstimate:
    """Estimate of the truncated mass: integral of min(f(x), t)."""
    if not t > 0:
        raise OracleError(f"threshold must be positive, got {t}")
    budget = budget or DEFAULT_BUDGET
    if t >= spec.f_max:
        return OracleEstimate(value=1.0, method="closed-form", abs_tol=0.0,
                              note="threshold at or above the sup-norm")
    functional = make_functional(TRUNCATION, t=t)
    return integrate_functional(spec, functional, budget, method)


def solve_threshold(spec: DensitySpec, gamma: float, tol: float = 1e-8,
                    budget: OracleBudget | None = None) -> float:
    """Threshold t with truncated mass within tol of gamma (bisection)."""
    if not 0.0 < gamma < 1.0:
        raise OracleError(f"gamma must be in (0,1), got {gamma}")
    budget = budget or DEFAULT_BUDGET
    inner = replace(budget, quad_tol_1d=min(budget.quad_tol_1d, tol / 8.0),
                    quad_tol_nd=min(budget.quad_tol_nd, tol / 8.0))
    lo, hi = 0.0, spec.f_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        mass = truncated_mass(spec, mid, inner).value
        if abs(mass - gamma) <= tol:
            return mid
        if mass < gamma:
            lo = mid
        else:
            hi = mid
    raise OracleError("threshold bisection did not reach the mass tolerance")


def truncated_entropy(spec: DensitySpec, gamma: float,
                      budget: OracleBudget | None = None,
                      t: float | None = None, tol: float = 1e-8) -> OracleEstimate:
    """Differential entropy of the renormalized truncated density min(f,t)/gamma."""
    if not 0.0 < gamma < 1.0:
        raise OracleError(f"gamma must be in (0,1), got {gamma}")
    budget = budget or DEFAULT_BUDGET
    if t is None:
        t = solve_threshold(spec, gamma, tol=tol, budget=budget)
    scalar_tf, vec_tf = _mlogm_transforms(t)
    model = _mlogm_model(spec.family, t)
    est = _integrate(spec, scalar_tf, vec_tf, model, budget, "auto",
                     value_at_peak=scalar_tf(spec.f_max))
    value = -est.value / gamma + math.log(gamma)
    abs_tol = None if est.abs_tol is None else est.abs_tol / gamma + tol / gamma
    return OracleEstimate(value=value, method=est.method, abs_tol=abs_tol,
                          std_error=None if est.std_error is None else est.std_error / gamma,
                          sample_count=est.sample_count, seed=est.seed,
                          worker_count=est.worker_count, converged=est.converged,
                          note=f"threshold={t!r}")


def generate_random_density(config: RandomDensityConfig) -> DensitySpec:
    """Normalized random density in the family, convex transform by construction."""
    fam = config.family
    n = config.n
    if fam.kind == CUSTOM:
        raise FamilyError("random generation rejects custom families (no auto-normalization)")
    if fam.kind == BETA_CONCAVE and fam.beta <= n:
        raise FamilyError(f"random generation needs beta > n, got beta={fam.beta}, n={n}")
    rng = np.random.default_rng(config.seed)
    if config.generator == "quadratic":
        basis, _ = np.linalg.qr(rng.normal(size=(n, n)))
        base = math.exp(rng.uniform(-1.2, 0.5))
        eigs = base * rng.uniform(1.0, 10.0, n)
        q = basis @ np.diag(eigs) @ basis.T
        q = 0.5 * (q + q.T)
        offset = rng.uniform(-1.0, 1.0) if fam.kind == LOG_CONCAVE else rng.uniform(0.4, 1.6)
        spec = make_quadratic_g(fam, n, q, offset)
    elif config.generator == "max-affine":
        if n > 2:
            raise OracleError("max-affine generation supports n <= 2")
        rows = []
        inters = []
        for i in range(n):
            for sign in (1.0, -1.0):
                row = np.zeros(n)
                row[i] = sign * rng.uniform(0.6, 2.2)
                rows.append(row)
                inters.append(rng.uniform(-0.8, 0.2) if fam.kind == LOG_CONCAVE
                              else rng.uniform(0.2, 1.0))
        for _ in range(max(config.pieces - len(rows), 0)):
            direction = rng.normal(size=n)
            direction /= np.linalg.norm(direction)
            rows.append(direction * rng.uniform(0.3, 1.8))
            inters.append(rng.uniform(-0.8, 0.2) if fam.kind == LOG_CONCAVE
                          else rng.uniform(0.2, 1.0))
        if fam.kind == BETA_CONCAVE:
            rows.append(np.zeros(n))  # positive floor keeps g inside the kernel domain
            inters.append(rng.uniform(0.4, 1.2))
        spec = make_max_affine_g(fam, n, np.array(rows), np.array(inters))
    else:
        raise OracleError(f"unknown generator {config.generator!r}")
    mass = integrate_functional(
        spec, make_functional("custom", phi=lambda x: np.asarray(x, dtype=float),
                              phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float))),
        method="quadrature")
    return absorb_mass(spec, mass.value)


def slice_inequality_check(spec: DensitySpec, budget: OracleBudget | None = None) -> dict:
    """Product of the slice suprema factors against n * sup f (two dimensions).

    The suprema are located by coordinate search from the mode, so the first
    factor is a certified lower bound on the true supremum; the returned
    ``sup_status`` records that caveat.
    """
    if spec.n != 2:
        raise OracleError("slice inequality check is implemented for n = 2")
    budget = budget or DEFAULT_BUDGET
    lo, hi = sampling_window(spec, drop=1e-12)
    slo, shi = sampling_window(spec, drop=1e-4)
    x0 = mode_point(spec)

    def marginal(x1):
        return _quad(lambda y: density_eval_many(
            spec, np.array([[x1, y]]))[0], lo[1], hi[1], [], 1e-9)

    grid = np.linspace(slo[0], shi[0], 41)
    vals = [marginal(x) for x in grid]
    i_best = int(np.argmax(vals))
    window = (grid[max(i_best - 1, 0)], grid[min(i_best + 1, len(grid) - 1)])
    res = optimize.minimize_scalar(lambda x: -marginal(x), bounds=window,
                                   method="bounded", options={"xatol": 1e-8})
    marginal_sup = max(-float(res.fun), max(vals))

    def profile(x1):
        r = optimize.minimize_scalar(
            lambda y: -density_eval_many(spec, np.array([[x1, y]]))[0],
            bounds=(lo[1], hi[1]), method="bounded", options={"xatol": 1e-10})
        return -float(r.fun)

    profile_integral = _quad(profile, lo[0], hi[0], [float(x0[0])], 1e-8)
    lhs = marginal_sup * profile_integral
    rhs = spec.n * spec.f_max
    return {
        "marginal_sup": marginal_sup,
        "profile_integral": profile_integral,
        "lhs": lhs,
        "rhs": rhs,
        "holds": bool(lhs <= rhs * (1.0 + 1e-9) + 1e-12),
        "sup_status": "search-lower-bound",
    }
