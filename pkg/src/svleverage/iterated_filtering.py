"""Maximum likelihood by iterated filtering (IF1).

Parameters are carried by every particle on their estimation scale and
perturbed as random walks inside a particle-filter pass. The perturbation
sd is cooled by ``alpha**m`` at iteration ``m`` and each pass ends with the
weighted-mean / prediction-variance update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng as streams
from .errors import DomainError, FilterFailure, UpdateDegeneracyError
from .model import get_model, make_params, transform_for
from .particle_filter import filter_pass

log = logging.getLogger(__name__)

V_FLOOR = 1e-12
DEFAULT_RW_SD = 0.02
DEFAULT_IVP_SD = 0.1


def cooling_factor(m, alpha):
    if m < 0:
        raise DomainError("iteration index must be non-negative")
    return float(alpha) ** m


@dataclass
class MifConfig:
    """Algorithmic settings; ``init_sd`` entries are on the estimation scale.

    Parameters missing from ``init_sd`` get 0.02 (0.1 for initial-value
    parameters). At t = 0 regular parameters are scattered with
    ``var_factor`` times their per-step sd. Names in ``frozen`` are held at
    their starting value.
    """

    iterations: int = 150
    particles: int = 8000
    alpha: float = 0.978
    init_sd: dict = field(default_factory=dict)
    ivp_names: tuple | None = None
    frozen: tuple = ()
    ivp_lag: int = 20
    var_factor: float = 10.0
    seed: int = 0
    resample: str = "every"
    workers: int = 1

    def __post_init__(self):
        if int(self.iterations) < 0:
            raise DomainError("iterations must be >= 0")
        if int(self.particles) < 2:
            raise DomainError("particles must be >= 2")
        if not 0.0 < float(self.alpha) <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")
        if any(not v > 0 for v in self.init_sd.values()):
            raise DomainError("every init_sd must be positive")
        if not self.var_factor > 0:
            raise DomainError("var_factor must be positive")
        if int(self.ivp_lag) < 1:
            raise DomainError("ivp_lag must be >= 1")

    def sd_for(self, model):
        ivps = model.ivp_names if self.ivp_names is None else tuple(self.ivp_names)
        sd = []
        for n in model.param_names:
            if n in self.frozen:
                sd.append(0.0)
            else:
                sd.append(self.init_sd.get(n, DEFAULT_IVP_SD if n in ivps else DEFAULT_RW_SD))
        return np.array(sd), np.array([n in ivps for n in model.param_names])


@dataclass
class MifRecord:
    m: int
    theta: dict
    loglik: float


@dataclass
class MifTrace:
    """Row ``m`` holds ``theta_m`` (natural scale) and the log-likelihood of
    the filter pass run at it; the last row's pass is unperturbed."""

    variant: str
    records: list = field(default_factory=list)

    @property
    def final(self):
        return make_params(self.variant, self.records[-1].theta)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([r.loglik if name == "loglik" else r.theta.get(name, np.nan) for r in self.records])


class ParameterSwarm:
    """Per-particle parameters on the estimation scale, driven by filter_pass."""

    def __init__(self, model, theta_est, sd, ivp_mask, J, rng, scale, var_factor=1.0):
        self.model = model
        self.names = model.param_names
        self.center = np.asarray(theta_est, float)
        self.sd = np.asarray(sd, float) * scale
        self.ivp = np.asarray(ivp_mask, bool)
        self.active = self.sd > 0
        self.regular = self.active & ~self.ivp
        self.var_factor = var_factor
        self.J = J
        self.rng = rng
        self.z = np.tile(self.center, (J, 1))
        self.means = []
        self.pred_vars = []

    def perturb(self, t):
        if t == 0:
            sd = np.where(self.regular, self.sd * self.var_factor, self.sd)
        else:
            sd = np.where(self.regular, self.sd, 0.0)
        if np.any(sd > 0):
            self.z = self.z + self.rng.normal(streams.PERTURB, t, self.z.shape) * sd
        d = self.z - self.z.mean(axis=0)
        self.pred_vars.append(np.einsum("ij,ij->j", d, d) / self.J)

    def natural(self):
        return {n: transform_for(n).inverse(self.z[:, k]) for k, n in enumerate(self.names)}

    def observe(self, t, w):
        self.means.append(w @ self.z)

    def resample(self, idx):
        self.z = self.z[idx]


def mif_update(theta, filtered_means, pred_vars, ivp_mask=None, ivp_lag=20, active=None):
    """One IF1 update on the estimation scale.

    Regular parameters move to
    ``theta + V_1 * sum_t (mean_t - mean_{t-1}) / V_t`` with
    ``mean_0 = theta``; initial-value parameters jump to their filtered mean
    at time ``ivp_lag`` (or the last time point if the series is shorter).
    """
    theta = np.asarray(theta, float)
    means = np.atleast_2d(np.asarray(filtered_means, float))
    V = np.atleast_2d(np.asarray(pred_vars, float))
    P = theta.size
    ivp_mask = np.zeros(P, bool) if ivp_mask is None else np.asarray(ivp_mask, bool)
    active = np.ones(P, bool) if active is None else np.asarray(active, bool)
    regular = active & ~ivp_mask
    new = theta.copy()
    if np.any(regular):
        Vr = V[:, regular]
        if np.any(Vr <= V_FLOOR):
            t_bad = int(np.argmax(np.any(Vr <= V_FLOOR, axis=1))) + 1
            raise UpdateDegeneracyError(
                f"prediction variance fell below {V_FLOOR:g} at t={t_bad}; increase the perturbation sd")
        prev = np.vstack([theta[regular], means[:-1, regular]])
        new[regular] = theta[regular] + Vr[0] * np.sum((means[:, regular] - prev) / Vr, axis=0)
    ivp_active = active & ivp_mask
    if np.any(ivp_active):
        k = min(int(ivp_lag), means.shape[0]) - 1
        new[ivp_active] = means[k, ivp_active]
    return new


def _natural_dict(model, z):
    return make_params(model.variant, {n: float(transform_for(n).inverse(v))
                                       for n, v in zip(model.param_names, z)}).to_dict()


def _at_iteration(exc, m):
    err = FilterFailure(f"iteration {m}: {exc.message}", t=exc.t)
    err.iteration = m
    return err


def run_mif(variant, data, config: MifConfig, theta_0, seed=None, progress=None):
    """Iterated filtering from ``theta_0``; returns a :class:`MifTrace` of length M + 1."""
    model = get_model(variant)
    theta_0 = make_params(model.variant, theta_0)
    seed = config.seed if seed is None else seed
    root = streams.CounterRNG(seed)
    sd, ivp_mask = config.sd_for(model)
    z = theta_0.to_estimation()
    trace = MifTrace(variant=model.variant)
    J = int(config.particles)
    for m in range(int(config.iterations)):
        swarm = ParameterSwarm(model, z, sd, ivp_mask, J, root.child(m),
                               cooling_factor(m, config.alpha), config.var_factor)
        try:
            out = filter_pass(model, data, J, swarm.rng, swarm=swarm, resample=config.resample,
                              workers=config.workers, summaries=False)
        except FilterFailure as exc:
            raise _at_iteration(exc, m) from exc
        loglik = float(np.sum(out["loglik_increment"]))
        trace.records.append(MifRecord(m=m, theta=_natural_dict(model, z), loglik=loglik))
        z = mif_update(z, np.array(swarm.means), np.array(swarm.pred_vars), ivp_mask,
                       config.ivp_lag, active=swarm.active)
        log.debug("mif iteration %d loglik %.3f", m, loglik)
        if progress is not None:
            progress(m, loglik)
    M = int(config.iterations)
    final = _natural_dict(model, z)
    try:
        out = filter_pass(model, data, J, root.child(M), params=final, resample=config.resample,
                          workers=config.workers, summaries=False)
    except FilterFailure as exc:
        raise _at_iteration(exc, M) from exc
    trace.records.append(MifRecord(m=M, theta=final, loglik=float(np.sum(out["loglik_increment"]))))
    return trace
