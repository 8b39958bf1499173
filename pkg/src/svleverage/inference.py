"""Post-estimation tools: replicated likelihoods, Hessian standard errors,
likelihood slices, local quadratic smoothing and information criteria."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from . import rng as streams
from .errors import DomainError, FilterFailure
from .model import get_model, make_params, transform_for
from .particle_filter import filter_pass


class SmoothingWarning(UserWarning):
    """A smoothing window had to be widened to hold three points."""


class HessianWarning(UserWarning):
    """The negative Hessian was not positive definite and was projected."""


@dataclass
class LoglikEstimate:
    """Mean of replicate filter log-likelihoods and its Monte Carlo SE.

    ``mc_se`` is NaN for a single replicate.
    """

    mean: float
    mc_se: float
    replicates: int
    particles: int
    values: tuple = ()


@dataclass
class SliceResult:
    param_name: str
    grid: np.ndarray
    loglik_points: list
    smoothed: np.ndarray
    widened: bool = False

    @property
    def loglik(self):
        return np.array([e.mean for e in self.loglik_points])


@dataclass
class SEReport:
    """Point estimates and standard errors on the natural scale."""

    names: tuple
    estimate: dict
    se: dict
    hessian: np.ndarray | None = None
    projected: bool = False


# ---------------------------------------------------------------------------
# replicated likelihood evaluation


def _replicate_loglik(args):
    variant, params, y, J, seed, r = args
    out = filter_pass(get_model(variant), y, J, streams.CounterRNG(seed, r), params=params, summaries=False)
    return math.fsum(out["loglik_increment"])


def _map(fn, jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, jobs))


def summarize_logliks(values, particles=0):
    values = np.asarray(values, dtype=float)
    R = values.size
    if R < 1:
        raise DomainError("need at least one replicate")
    se = float(np.std(values, ddof=1) / math.sqrt(R)) if R >= 2 else float("nan")
    return LoglikEstimate(mean=float(np.mean(values)), mc_se=se, replicates=R,
                          particles=int(particles), values=tuple(float(v) for v in values))


def _y(data):
    return np.asarray(getattr(data, "values", data), dtype=float)


def evaluate_loglik(variant, params, data, J, replicates=2, seed=0, workers=1):
    """Average ``replicates`` independent particle-filter log-likelihoods.

    Replicate ``r`` uses the stream family ``(seed, r)``, so two calls with
    the same seed share random numbers.
    """
    R = int(replicates)
    if R < 1:
        raise DomainError("replicates must be >= 1")
    model = get_model(variant)
    params = model.param_dict(params if isinstance(params, dict) else model.params(params))
    y = _y(data)
    jobs = [(model.variant if isinstance(variant, str) else variant, params, y, int(J), int(seed), r)
            for r in range(R)]
    if workers > 1:
        return summarize_logliks(_map(_replicate_loglik, jobs, workers), particles=J)
    values = []
    for r, job in enumerate(jobs):
        try:
            values.append(_replicate_loglik(job))
        except FilterFailure as exc:
            err = FilterFailure(f"replicate {r}: {exc.message}", t=exc.t)
            err.replicate = r
            raise err from exc
    return summarize_logliks(values, particles=J)


# ---------------------------------------------------------------------------
# numerical Hessian


def hessian_central(fn, x, steps):
    """Central-difference Hessian of ``fn`` at ``x``."""
    x = np.asarray(x, dtype=float)
    P = x.size
    h = np.broadcast_to(np.asarray(steps, dtype=float), (P,)).copy()
    if np.any(h <= 0):
        raise DomainError("Hessian step sizes must be positive")
    f0 = fn(x)
    H = np.empty((P, P))
    e = np.eye(P)
    fp = [fn(x + h[i] * e[i]) for i in range(P)]
    fm = [fn(x - h[i] * e[i]) for i in range(P)]
    for i in range(P):
        H[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / h[i] ** 2
        for j in range(i + 1, P):
            di, dj = h[i] * e[i], h[j] * e[j]
            H[i, j] = H[j, i] = (fn(x + di + dj) - fn(x + di - dj) - fn(x - di + dj)
                                 + fn(x - di - dj)) / (4.0 * h[i] * h[j])
    return H


def covariance_from_hessian(H):
    """Inverse of ``-H``; projects onto positive definite matrices when needed.

    Returns ``(cov, projected)``.
    """
    info = -0.5 * (np.asarray(H, float) + np.asarray(H, float).T)
    lam, Q = np.linalg.eigh(info)
    projected = bool(np.any(lam <= 0))
    if projected:
        floor = 1e-8 * max(np.max(np.abs(lam)), 1e-300)
        lam = np.maximum(lam, floor)
        warnings.warn("negative Hessian not positive definite; using nearest positive-definite projection",
                      HessianWarning, stacklevel=3)
    return (Q / lam) @ Q.T, projected


def hessian_se(loglik, x, steps):
    """Standard errors from the curvature of ``loglik`` at ``x`` (same scale as ``x``).

    Returns ``(se, hessian, projected)``.
    """
    H = hessian_central(loglik, x, steps)
    cov, projected = covariance_from_hessian(H)
    return np.sqrt(np.diag(cov)), H, projected


def numerical_se(variant, theta_hat, data, J, steps=0.05, seed=0, replicates=3, names=None):
    """Hessian-based standard errors for ``theta_hat``.

    Differences are taken on the estimation scale of each parameter using
    a likelihood averaged over ``replicates`` filters that share random
    numbers across stencil points; SEs are mapped back by the delta method.
    By default initial-value parameters are held fixed.
    """
    model = get_model(variant)
    theta_hat = make_params(model.variant, theta_hat)
    names = tuple(n for n in model.param_names if n not in model.ivp_names) if names is None else tuple(names)
    base = theta_hat.to_dict()
    y = _y(data)
    z0 = np.array([float(transform_for(n).forward(base[n])) for n in names])
    R = int(replicates)

    def loglik(z):
        p = dict(base)
        for n, v in zip(names, z):
            p[n] = float(transform_for(n).inverse(v))
        p = make_params(model.variant, p).to_dict()
        vals = [_replicate_loglik((model.variant, p, y, int(J), int(seed), r)) for r in range(R)]
        return float(np.mean(vals))

    se_z, H, projected = hessian_se(loglik, z0, steps)
    jac = np.array([float(transform_for(n).jacobian(v)) for n, v in zip(names, z0)])
    se = {n: float(abs(d) * s) for n, d, s in zip(names, jac, se_z)}
    return SEReport(names=names, estimate={n: base[n] for n in names}, se=se, hessian=H, projected=projected)


# ---------------------------------------------------------------------------
# slices and smoothing


def local_quadratic_smooth(x, y, bandwidth):
    """Tricube-weighted local quadratic regression evaluated at each ``x``.

    Windows holding fewer than three points are widened to the third
    nearest neighbour (a :class:`SmoothingWarning` is issued).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise DomainError("local quadratic smoothing needs at least three (x, y) pairs")
    if not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    fitted = np.empty_like(y)
    widened = False
    for i, x0 in enumerate(x):
        d = np.abs(x - x0)
        bw = bandwidth
        if np.count_nonzero(d < bw) < 3:
            bw = np.sort(d)[2] * 1.5
            widened = True
        u = d / bw
        w = np.where(u < 1.0, (1.0 - u ** 3) ** 3, 0.0)
        keep = w > 0
        dx = x[keep] - x0
        A = np.column_stack([np.ones_like(dx), dx, dx * dx]) * np.sqrt(w[keep])[:, None]
        coef, *_ = np.linalg.lstsq(A, y[keep] * np.sqrt(w[keep]), rcond=None)
        fitted[i] = coef[0]
    if widened:
        warnings.warn("smoothing window widened to hold three points", SmoothingWarning, stacklevel=2)
    return fitted


def slice_likelihood(variant, theta_hat, param_name, grid, data, J, replicates=2, seed=0,
                     bandwidth=None, workers=1):
    """Log-likelihood along ``grid`` for one parameter, the others fixed at ``theta_hat``.

    All grid points reuse the same random streams. ``bandwidth`` defaults to
    half the grid range.
    """
    model = get_model(variant)
    theta_hat = make_params(model.variant, theta_hat)
    if param_name not in model.param_names:
        raise DomainError(f"{param_name!r} is not a parameter of the {model.variant} model")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a non-empty 1-d sequence")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing")
    points = []
    for v in grid:
        try:
            p = theta_hat.replace(**{param_name: float(v)})
        except DomainError as exc:
            raise DomainError(f"grid point {param_name}={float(v)!r} outside the parameter domain: {exc}") from None
        points.append(p)
    y = _y(data)
    R = int(replicates)
    jobs = [(model.variant, p.to_dict(), y, int(J), int(seed), r) for p in points for r in range(R)]
    vals = np.array(_map(_replicate_loglik, jobs, workers)).reshape(grid.size, R)
    ests = [summarize_logliks(v, particles=J) for v in vals]
    means = np.array([e.mean for e in ests])
    widened = False
    if grid.size >= 3:
        bw = bandwidth if bandwidth is not None else 0.5 * (grid[-1] - grid[0])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", SmoothingWarning)
            smoothed = local_quadratic_smooth(grid, means, bw)
        widened = any(issubclass(c.category, SmoothingWarning) for c in caught)
    else:
        smoothed = means.copy()
    return SliceResult(param_name=param_name, grid=grid, loglik_points=ests, smoothed=smoothed, widened=widened)


def profile_likelihood(variant, data, param_name, grid, config, theta_start, J_eval=None,
                       replicates=2, seed=0):
    """Experimental: re-fit with ``param_name`` frozen at each grid value.

    Returns ``(grid, estimates, traces)``.
    """
    from dataclasses import replace

    from .iterated_filtering import run_mif

    model = get_model(variant)
    theta_start = make_params(model.variant, theta_start)
    cfg = replace(config, frozen=tuple(set(config.frozen) | {param_name}))
    J_eval = config.particles if J_eval is None else J_eval
    estimates, traces = [], []
    for v in np.asarray(grid, float):
        trace = run_mif(model.variant, data, cfg, theta_start.replace(**{param_name: float(v)}))
        traces.append(trace)
        estimates.append(evaluate_loglik(model.variant, trace.final, data, J_eval, replicates, seed))
    return np.asarray(grid, float), estimates, traces


# ---------------------------------------------------------------------------
# model comparison


def aic(loglik, k):
    if k < 0:
        raise DomainError("number of parameters must be >= 0")
    return 2.0 * k - 2.0 * loglik


def _lower_gamma_reg(a, x):
    """Regularised lower incomplete gamma ``P(a, x)``."""
    if x <= 0:
        return 0.0
    lg = math.lgamma(a)
    if x < a + 1.0:
        term = total = 1.0 / a
        ap = a
        for _ in range(1000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return total * math.exp(-x + a * math.log(x) - lg)
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return 1.0 - math.exp(-x + a * math.log(x) - lg) * h


def chi2_cdf(x, k):
    return _lower_gamma_reg(0.5 * k, 0.5 * x)


def chi2_quantile(p, k):
    """Chi-square quantile: Wilson-Hilferty start refined by bisection on the CDF."""
    if not 0.0 < p < 1.0 or k <= 0:
        raise DomainError("need 0 < p < 1 and k > 0")
    z = NormalDist().inv_cdf(p)
    c = 2.0 / (9.0 * k)
    x0 = max(k * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-8)
    lo, hi = x0, x0
    while chi2_cdf(lo, k) > p:
        lo *= 0.5
    while chi2_cdf(hi, k) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, k) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * hi:
            break
    return 0.5 * (lo + hi)


def equivalent_extra_params(delta_loglik, level=0.05, k_max=10_000):
    """Smallest number of extra parameters whose likelihood-ratio test at
    ``level`` would not find ``delta_loglik`` significant."""
    if not delta_loglik > 0:
        raise DomainError("delta_loglik must be positive")
    stat = 2.0 * delta_loglik
    for k in range(1, k_max + 1):
        if stat < chi2_quantile(1.0 - level, k):
            return k
    raise DomainError("delta_loglik too large")
