"""Bootstrap particle filter: likelihood estimation and filtering summaries."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .data_io import ReturnSeries
from .errors import DomainError, FilterFailure
from .model import get_model


@dataclass
class ParticleCloud:
    """Working set of the filter at one time point."""

    states: object
    log_weights: np.ndarray
    params: np.ndarray | None = None

    def __post_init__(self):
        if len(self.log_weights) < 2:
            raise DomainError("a particle cloud needs at least two particles")


@dataclass
class FilterResult:
    """Log-likelihood estimate plus per-time filtering summaries.

    ``per_time`` maps each column of the filter CSV schema (``t``,
    ``loglik_increment``, ``ess``, ``h_mean``, ``rho_mean``, ``rho_q1``,
    ``rho_q3``, ``eps_mean``) to an array of length T.
    """

    loglik: float
    per_time: dict = field(default_factory=dict)
    seed: int | None = None

    def __len__(self):
        return len(self.per_time.get("t", ()))


def normalize_and_increment(log_weights):
    """Normalise log-weights; return ``(weights, log-mean-exp)``.

    Raises :class:`FilterFailure` when no weight is positive.
    """
    lw = np.asarray(log_weights, dtype=float)
    if np.any(np.isnan(lw)):
        raise FilterFailure("NaN log-weight")
    m = lw.max()
    if not np.isfinite(m):
        raise FilterFailure("all particle weights are zero")
    w = np.exp(lw - m)
    s = w.sum()
    w /= s
    return w, float(m + math.log(s) - math.log(lw.size))


def effective_sample_size(weights):
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def weighted_quantile(values, weights, q):
    """Smallest value whose cumulative (sorted) weight reaches ``q``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise DomainError("weighted_quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise DomainError("q must lie in [0, 1]")
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    # tolerate rounding in the cumulative sum
    k = int(np.searchsorted(cw, q * cw[-1] - 1e-12 * cw[-1], side="left"))
    return float(values[order[min(k, values.size - 1)]])


def systematic_resample(weights, rng=None, n=None):
    """Systematic resampling; returns ``n`` ancestor indices (default ``len(weights)``).

    ``rng`` may be a numpy Generator or a uniform draw in [0, 1). Offspring
    counts differ from ``n * w_j`` by less than one.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DomainError("weights must be a non-empty vector of non-negative numbers")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"weights must sum to one (sum={w.sum()!r})")
    n = w.size if n is None else int(n)
    if isinstance(rng, np.random.Generator):
        u = rng.random()
    elif rng is None:
        u = np.random.default_rng().random()
    else:
        u = float(rng)
    return _systematic(w, u, n)


def _systematic(w, u, n):
    cw = np.cumsum(w)
    cw[-1] = 1.0
    positions = (u + np.arange(n)) / n
    idx = np.searchsorted(cw, positions, side="right")
    return np.minimum(idx, w.size - 1)


def _as_values(data):
    if isinstance(data, ReturnSeries):
        return data.values
    y = np.asarray(data, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DomainError("data must be a non-empty 1-d series")
    return y


def _slice_params(p, sl):
    return {k: (v[sl] if np.ndim(v) else v) for k, v in p.items()}


def _propagate(model, state, y_prev, p, noise, t, pool, workers):
    if pool is None:
        return model.propagate(state, y_prev, p, noise, t)
    J = len(state)
    bounds = np.linspace(0, J, workers + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    parts = list(pool.map(
        lambda sl: model.propagate(state.take(sl), y_prev, _slice_params(p, sl),
                                   {k: v[sl] for k, v in noise.items()}, t),
        slices))
    h = np.concatenate([s.h for s in parts])
    f = None if parts[0].f is None else np.concatenate([s.f for s in parts])
    return type(parts[0])(h, f)


def filter_pass(model, data, J, rng, params=None, swarm=None, resample="every",
                sort_particles=True, workers=1, summaries=True):
    """Run one bootstrap-filter pass and return per-time arrays.

    Either ``params`` (fixed parameter mapping) or ``swarm`` (per-particle
    parameters, used by iterated filtering) supplies the model parameters.
    The swarm must provide ``perturb(t)``, ``natural()``,
    ``observe(t, weights)`` and ``resample(idx)``.
    """
    y = _as_values(data)
    T = y.size
    J = int(J)
    if J < 2:
        raise DomainError("J must be at least 2")
    if resample not in ("every", "ess"):
        raise DomainError("resample must be 'every' or 'ess'")
    rng = streams.as_rng(rng)
    model = get_model(model)
    p = None if params is None else model.param_dict(params)

    out = {
        "t": np.arange(1, T + 1),
        "loglik_increment": np.empty(T),
        "ess": np.empty(T),
    }
    if summaries:
        for c in ("h_mean", "rho_mean", "rho_q1", "rho_q3", "eps_mean"):
            out[c] = np.empty(T)
    carry = None
    log_j = math.log(J)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    state = None
    try:
        for t in range(T):
            try:
                if swarm is not None:
                    swarm.perturb(t)
                    p = swarm.natural()
                if t == 0:
                    state = model.init_states(p, rng, J)
                else:
                    noise = model.draw_noise(rng, t, J)
                    state = _propagate(model, state, y[t - 1], p, noise, t + 1, pool, workers)
                lw = model.obs_logdensity(y[t], state)
                if carry is not None:
                    lw = lw + carry
                w, inc = normalize_and_increment(lw)
            except FilterFailure as exc:
                if exc.t is None:
                    raise type(exc)(str(exc), t=t + 1) from None
                raise
            out["loglik_increment"][t] = inc
            out["ess"][t] = effective_sample_size(w)
            if summaries:
                s = model.summaries(y[t], state, p, w)
                out["h_mean"][t] = np.dot(w, s["h"])
                rho = s["rho"]
                out["rho_mean"][t] = np.dot(w, rho)
                if np.ptp(rho) == 0.0:
                    out["rho_q1"][t] = out["rho_q3"][t] = rho[0]
                else:
                    out["rho_q1"][t] = weighted_quantile(rho, w, 0.25)
                    out["rho_q3"][t] = weighted_quantile(rho, w, 0.75)
                out["eps_mean"][t] = np.dot(w, s["eps"])
            if swarm is not None:
                swarm.observe(t, w)
            if resample == "every" or out["ess"][t] < 0.5 * J:
                u = rng.uniform(streams.RESAMPLE, t)
                if sort_particles:
                    order = np.argsort(model.sort_key(state))
                    idx = order[_systematic(w[order], u, J)]
                else:
                    idx = _systematic(w, u, J)
                state = state.take(idx)
                if swarm is not None:
                    swarm.resample(idx)
                carry = None
            else:
                carry = np.log(w) + log_j
    finally:
        if pool is not None:
            pool.shutdown()
    return out


def run_filter(variant, params, data, J, seed=0, resample="every", sort_particles=True, workers=1):
    """Bootstrap particle filter over ``data``; returns a :class:`FilterResult`.

    Particles are resampled systematically at every step (``resample="ess"``
    only when ESS < J/2). Before resampling they are ordered by ``h``, which
    keeps the likelihood estimate close to continuous in the parameters
    when seeds are held fixed. Summaries use the weighted cloud before
    resampling.
    """
    model = get_model(variant)
    if not isinstance(params, dict):
        params = model.params(params)
    rng = seed if isinstance(seed, streams.CounterRNG) else streams.CounterRNG(seed)
    per_time = filter_pass(model, data, J, rng, params=params, resample=resample,
                           sort_particles=sort_particles, workers=workers)
    inc = per_time["loglik_increment"]
    return FilterResult(loglik=math.fsum(inc), per_time=per_time, seed=rng.seed)
