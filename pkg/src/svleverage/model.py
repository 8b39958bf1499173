"""Stochastic-volatility models with fixed and random-walk leverage.

Two variants share the measurement equation ``y_t = exp(h_t / 2) * eps_t``:

* ``fixed``: ``h_t = mu_h (1 - phi) + phi h_{t-1} + beta_t rho exp(-h_{t-1}/2)
  + sigma_omega omega_t`` with ``beta_t = y_{t-1} sigma_eta sqrt(1 - phi^2)``
  and ``sigma_omega = sigma_eta sqrt(1 - phi^2) sqrt(1 - rho^2)``.
* ``rw``: the same recursion with ``rho`` replaced by ``rho_t = tanh(f_t)``
  where ``f_t = f_{t-1} + sigma_nu nu_t`` is a latent random walk.

The parameterisation keeps the marginal law of ``h_t`` at
``N(mu_h, sigma_eta^2)`` regardless of ``phi``; the first state is drawn
from that marginal and carries no leverage term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit, logit

from . import rng as streams
from .errors import DomainError, PropagationError

LOG_2PI = math.log(2.0 * math.pi)
H_CLAMP = 700.0
# largest double below one; tanh saturates to exactly 1.0 beyond |f| ~ 19
RHO_MAX = float(np.nextafter(1.0, 0.0))

VARIANTS = ("fixed", "rw")


# ---------------------------------------------------------------------------
# scalar/array building blocks


def _finite(x, what):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be finite")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _tanh_sat(f):
    return np.clip(np.tanh(f), -RHO_MAX, RHO_MAX)


def fisher_to_rho(f):
    """Map a leverage factor on the real line to a correlation in (-1, 1).

    Saturates at the nearest representable value inside the open interval,
    so ``|f|`` of any size stays strictly inside (-1, 1).
    """
    f = _finite(f, "leverage factor")
    return _scalar_or_array(_tanh_sat(f))


def rho_to_f(rho):
    """Inverse Fisher transform, ``0.5 * log((1 + rho) / (1 - rho))``."""
    rho = _finite(rho, "rho")
    if np.any(np.abs(rho) >= 1.0):
        raise DomainError("rho must lie strictly inside (-1, 1)")
    return _scalar_or_array(np.arctanh(rho))


def sigma_omega(sigma_eta, phi, rho):
    """Conditional sd of the volatility innovation once the leverage part is removed."""
    sigma_eta, phi, rho = np.asarray(sigma_eta, float), np.asarray(phi, float), np.asarray(rho, float)
    if np.any(sigma_eta < 0) or np.any(np.abs(phi) >= 1) or np.any(np.abs(rho) >= 1):
        raise DomainError("sigma_omega needs sigma_eta >= 0, |phi| < 1 and |rho| < 1")
    return _scalar_or_array(sigma_eta * np.sqrt(1.0 - phi * phi) * np.sqrt(1.0 - rho * rho))


def beta_t(y_prev, sigma_eta, phi):
    """Observation-dependent leverage loading ``y_{t-1} sigma_eta sqrt(1 - phi^2)``."""
    phi = np.asarray(phi, float)
    if np.any(np.abs(phi) >= 1):
        raise DomainError("|phi| must be < 1")
    return _scalar_or_array(np.asarray(y_prev, float) * np.asarray(sigma_eta, float) * np.sqrt(1.0 - phi * phi))


def _check_h(h, t):
    # NaN fails the comparison as well
    if not np.max(np.abs(h)) <= H_CLAMP:
        if not np.all(np.isfinite(h)):
            raise PropagationError("non-finite log-volatility", t=t)
        raise PropagationError(f"log-volatility outside [-{H_CLAMP:g}, {H_CLAMP:g}]", t=t)


def obs_logdensity(y, h):
    """Gaussian log density of ``y`` with variance ``exp(h)``."""
    y = np.asarray(y, float)
    h = np.clip(np.asarray(h, float), -H_CLAMP, H_CLAMP)
    return _scalar_or_array(-0.5 * LOG_2PI - 0.5 * h - 0.5 * y * y * np.exp(-h))


def shock_recovery(y, h):
    """Return shock ``eps = y * exp(-h / 2)`` implied by a return and a log-volatility."""
    h = np.clip(np.asarray(h, float), -H_CLAMP, H_CLAMP)
    return _scalar_or_array(np.asarray(y, float) * np.exp(-0.5 * h))


# ---------------------------------------------------------------------------
# parameter transforms


@dataclass(frozen=True)
class ParamTransform:
    """Bijection between a constrained parameter and the estimation scale."""

    name: str
    forward: Callable
    inverse: Callable
    # d(natural)/d(estimation), evaluated at the estimation-scale value
    jacobian: Callable


def _fisher_fwd(x):
    return np.arctanh(np.asarray(x, float))


TRANSFORMS = {
    "identity": ParamTransform("identity", lambda x: np.asarray(x, float) * 1.0,
                               lambda z: np.asarray(z, float) * 1.0,
                               lambda z: np.ones_like(np.asarray(z, float))),
    "log": ParamTransform("log", lambda x: np.log(x), lambda z: np.exp(z), lambda z: np.exp(z)),
    "logit01": ParamTransform("logit01", lambda x: logit(x), lambda z: expit(z),
                              lambda z: expit(z) * (1.0 - expit(z))),
    "fisher": ParamTransform("fisher", _fisher_fwd, lambda z: _tanh_sat(np.asarray(z, float)),
                             lambda z: 1.0 - np.tanh(z) ** 2),
}

PARAM_TRANSFORMS = {
    "mu_h": "identity",
    "phi": "logit01",
    "sigma_eta": "log",
    "rho": "fisher",
    "sigma_nu": "log",
    "f0": "identity",
}

ALL_PARAM_NAMES = ("mu_h", "phi", "sigma_eta", "rho", "sigma_nu", "f0")


def transform_for(name) -> ParamTransform:
    return TRANSFORMS[PARAM_TRANSFORMS[name]]


# ---------------------------------------------------------------------------
# parameter vectors


def _check_common(mu_h, phi, sigma_eta):
    if not all(math.isfinite(v) for v in (mu_h, phi, sigma_eta)):
        raise DomainError("parameters must be finite")
    if not 0.0 < phi < 1.0:
        raise DomainError(f"phi must lie in (0, 1), got {phi}")
    if not sigma_eta > 0.0:
        raise DomainError(f"sigma_eta must be positive, got {sigma_eta}")


class _Params:
    names: tuple = ()

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return type(self)(**d)

    def to_estimation(self) -> np.ndarray:
        return np.array([float(transform_for(n).forward(getattr(self, n))) for n in self.names])

    @classmethod
    def from_estimation(cls, z):
        return cls(**{n: float(transform_for(n).inverse(v)) for n, v in zip(cls.names, z)})


@dataclass(frozen=True)
class FixedLevParams(_Params):
    """Parameters of the fixed-leverage model."""

    mu_h: float
    phi: float
    sigma_eta: float
    rho: float

    names = ("mu_h", "phi", "sigma_eta", "rho")

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        _check_common(self.mu_h, self.phi, self.sigma_eta)
        if not (math.isfinite(self.rho) and -1.0 < self.rho < 1.0):
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True)
class RwLevParams(_Params):
    """Parameters of the random-walk leverage model; ``f0`` is the initial leverage factor."""

    mu_h: float
    phi: float
    sigma_eta: float
    sigma_nu: float
    f0: float

    names = ("mu_h", "phi", "sigma_eta", "sigma_nu", "f0")

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        _check_common(self.mu_h, self.phi, self.sigma_eta)
        if not (math.isfinite(self.sigma_nu) and self.sigma_nu > 0.0):
            raise DomainError(f"sigma_nu must be positive, got {self.sigma_nu}")
        if not math.isfinite(self.f0):
            raise DomainError("f0 must be finite")


DEFAULT_F0 = float(np.arctanh(-0.4))

# S&P500 1988-2012 point estimates and standard errors
TABLE1_FIXED = FixedLevParams(mu_h=-0.2506, phi=0.9805, sigma_eta=0.9003, rho=-0.6579)
TABLE1_FIXED_SE = {"mu_h": 0.0710, "phi": 0.0017, "sigma_eta": 0.0375, "rho": 0.0599}
TABLE1_RW = RwLevParams(mu_h=-0.2610, phi=0.9818, sigma_eta=0.9222, sigma_nu=0.0086, f0=DEFAULT_F0)
TABLE1_RW_SE = {"mu_h": 0.0776, "phi": 0.0015, "sigma_eta": 0.0406, "sigma_nu": 0.0013}
TABLE1_LOGLIK = {"fixed": (-8416.44, 0.0410), "rw": (-8409.06, 0.1333)}

PARAM_CLASSES = {"fixed": FixedLevParams, "rw": RwLevParams}


def check_variant(variant) -> str:
    if variant not in VARIANTS:
        raise DomainError(f"unknown model variant {variant!r}; expected one of {VARIANTS}")
    return variant


def make_params(variant, values=None, **kw):
    """Build the parameter object of ``variant`` from a mapping or keywords."""
    cls = PARAM_CLASSES[check_variant(variant)]
    if isinstance(values, cls):
        return values.replace(**kw) if kw else values
    d = dict(values or {})
    d.update(kw)
    missing = [n for n in cls.names if n not in d]
    if missing:
        raise DomainError(f"missing parameters for {variant} model: {missing}")
    return cls(**{n: d[n] for n in cls.names})


def default_params(variant):
    return TABLE1_FIXED if check_variant(variant) == "fixed" else TABLE1_RW


# ---------------------------------------------------------------------------
# latent state and transitions


@dataclass
class LatentState:
    """Log-volatility ``h`` and, for the random-walk model, leverage factor ``f``.

    Fields hold scalars for a single path or arrays for a particle cloud.
    """

    h: np.ndarray
    f: np.ndarray | None = None

    def take(self, idx):
        return LatentState(self.h[idx], None if self.f is None else self.f[idx])

    def __len__(self):
        return np.size(self.h)


def _draw(rng, stream, size, t=None):
    # numpy Generators draw sequentially; CounterRNG draws are addressed by (stream, t)
    if rng is None:
        raise DomainError("an rng is required when noise is not supplied")
    if isinstance(rng, np.random.Generator):
        return rng.standard_normal(size)
    return streams.as_rng(rng).normal(stream, 0 if t is None else t, size)


def init_state(variant, params, rng=None, size=None, z=None):
    """Draw ``h_1 ~ N(mu_h, sigma_eta^2)``; the rw variant starts at ``f = f0``."""
    params = make_params(variant, params)
    if z is None:
        z = _draw(rng, streams.INIT, size)
    h = params.mu_h + params.sigma_eta * np.asarray(z, float)
    f = None
    if variant == "rw":
        f = np.full(np.shape(h), params.f0)
    return LatentState(_scalar_or_array(h), None if f is None else _scalar_or_array(f))


def _h_drift(h_prev, y_prev, mu_h, phi, sigma_eta, rho):
    scale = sigma_eta * np.sqrt(1.0 - phi * phi)
    eps_prev = y_prev * np.exp(-0.5 * np.clip(h_prev, -H_CLAMP, H_CLAMP))
    return mu_h * (1.0 - phi) + phi * h_prev + scale * rho * eps_prev, scale * np.sqrt(1.0 - rho * rho)


def step_fixed(h_prev, y_prev, params, rng=None, omega=None, t=None):
    """One fixed-leverage transition ``h_{t-1} -> h_t``.

    ``omega`` may be supplied to force the innovation; otherwise it is drawn
    from ``rng`` with the shape of ``h_prev``.
    """
    p = make_params("fixed", params)
    h_prev = np.asarray(h_prev, float)
    if omega is None:
        omega = _draw(rng, streams.OMEGA, np.shape(h_prev) or None, t)
    mean, sd = _h_drift(h_prev, y_prev, p.mu_h, p.phi, p.sigma_eta, p.rho)
    h = mean + sd * np.asarray(omega, float)
    _check_h(h, t)
    return _scalar_or_array(h)


def step_rw(state_prev: LatentState, y_prev, params, rng=None, nu=None, omega=None, t=None):
    """One random-walk leverage transition of ``(h, f)``.

    ``nu`` and ``omega`` come from separate streams so that switching the
    leverage noise off leaves the volatility draws untouched.
    """
    p = make_params("rw", params)
    if state_prev.f is None:
        raise DomainError("random-walk transition needs a leverage factor in the state")
    h_prev = np.asarray(state_prev.h, float)
    shape = np.shape(h_prev) or None
    if nu is None:
        nu = _draw(rng, streams.NU, shape, t)
    if omega is None:
        omega = _draw(rng, streams.OMEGA, shape, t)
    f = np.asarray(state_prev.f, float) + p.sigma_nu * np.asarray(nu, float)
    rho = _tanh_sat(f)
    mean, sd = _h_drift(h_prev, y_prev, p.mu_h, p.phi, p.sigma_eta, rho)
    h = mean + sd * np.asarray(omega, float)
    _check_h(h, t)
    return LatentState(_scalar_or_array(h), _scalar_or_array(f))


def simulate(variant, params, T, seed=0):
    """Simulate ``T`` returns and the latent paths.

    Returns ``(series, paths)`` where ``series`` is a :class:`ReturnSeries`
    with synthetic integer dates and ``paths`` maps ``h``, ``f``, ``rho``,
    ``eps`` and ``eta`` to arrays of length ``T`` (``f`` is ``None`` for the
    fixed model; ``eta[0]`` is NaN because no transition precedes ``h_1``).
    """
    from .data_io import ReturnSeries

    params = make_params(variant, params)
    T = int(T)
    if T < 1:
        raise DomainError("T must be at least 1")
    r = streams.CounterRNG(seed)
    z0 = float(r.normal(streams.INIT, 0, 1)[0])
    eps = r.normal(streams.OBS, 0, T)
    omega = r.normal(streams.OMEGA, 0, T)
    nu = r.normal(streams.NU, 0, T) if variant == "rw" else None

    mu, phi, se = params.mu_h, params.phi, params.sigma_eta
    scale = se * math.sqrt(1.0 - phi * phi)
    h = np.empty(T)
    rho = np.empty(T)
    eta = np.full(T, np.nan)
    f = np.empty(T) if variant == "rw" else None

    h_t = mu + se * z0
    if variant == "rw":
        f_t = params.f0
        rho_t = float(_tanh_sat(f_t))
        f[0] = f_t
    else:
        rho_t = params.rho
    h[0], rho[0] = h_t, rho_t
    for t in range(1, T):
        if variant == "rw":
            f_t = f_t + params.sigma_nu * nu[t]
            rho_t = float(_tanh_sat(f_t))
            f[t] = f_t
        e = rho_t * eps[t - 1] + math.sqrt(1.0 - rho_t * rho_t) * omega[t]
        h_t = mu * (1.0 - phi) + phi * h_t + scale * e
        if not math.isfinite(h_t) or abs(h_t) > H_CLAMP:
            raise PropagationError("simulated log-volatility diverged", t=t + 1)
        h[t], rho[t], eta[t] = h_t, rho_t, e
    y = np.exp(0.5 * h) * eps
    series = ReturnSeries(values=y, dates=[str(i) for i in range(1, T + 1)])
    return series, {"h": h, "f": f, "rho": rho, "eps": eps, "eta": eta}


# ---------------------------------------------------------------------------
# filter-facing model objects


class SVModel:
    """Vectorised view of one variant for particle filtering.

    Every parameter argument is a mapping from name to a float or to a
    per-particle array on the natural scale.
    """

    variant: str = ""
    param_names: tuple = ()
    ivp_names: tuple = ()

    def params(self, values):
        return make_params(self.variant, values)

    def param_dict(self, values) -> dict:
        if isinstance(values, Mapping):
            return dict(values)
        return self.params(values).to_dict()

    def draw_noise(self, rng, t, size):
        return {"omega": rng.normal(streams.OMEGA, t, size)}

    def init_states(self, p, rng, size):
        z = rng.normal(streams.INIT, 0, size)
        return LatentState(p["mu_h"] + p["sigma_eta"] * z, self._init_f(p, size))

    def _init_f(self, p, size):
        return None

    def rho(self, state, p):
        raise NotImplementedError

    def propagate(self, state, y_prev, p, noise, t=None):
        raise NotImplementedError

    def obs_logdensity(self, y, state):
        _check_h(state.h, None)
        return -0.5 * LOG_2PI - 0.5 * state.h - 0.5 * y * y * np.exp(-state.h)

    def sort_key(self, state):
        return state.h

    def summaries(self, y, state, p, w):
        return {"h": state.h, "rho": np.broadcast_to(self.rho(state, p), state.h.shape),
                "eps": y * np.exp(-0.5 * state.h)}


class FixedLeverageModel(SVModel):
    variant = "fixed"
    param_names = FixedLevParams.names

    def rho(self, state, p):
        return p["rho"]

    def propagate(self, state, y_prev, p, noise, t=None):
        mean, sd = _h_drift(state.h, y_prev, p["mu_h"], p["phi"], p["sigma_eta"], p["rho"])
        h = mean + sd * noise["omega"]
        _check_h(h, t)
        return LatentState(h)


class RandomWalkLeverageModel(SVModel):
    variant = "rw"
    param_names = RwLevParams.names
    ivp_names = ("f0",)

    def _init_f(self, p, size):
        return np.broadcast_to(np.asarray(p["f0"], float), (size,)).copy()

    def draw_noise(self, rng, t, size):
        return {"omega": rng.normal(streams.OMEGA, t, size), "nu": rng.normal(streams.NU, t, size)}

    def rho(self, state, p):
        return _tanh_sat(state.f)

    def propagate(self, state, y_prev, p, noise, t=None):
        f = state.f + p["sigma_nu"] * noise["nu"]
        rho = _tanh_sat(f)
        mean, sd = _h_drift(state.h, y_prev, p["mu_h"], p["phi"], p["sigma_eta"], rho)
        h = mean + sd * noise["omega"]
        _check_h(h, t)
        return LatentState(h, f)


_MODELS = {"fixed": FixedLeverageModel(), "rw": RandomWalkLeverageModel()}


def get_model(variant):
    """Resolve a variant name (or pass through a model object)."""
    if isinstance(variant, str):
        return _MODELS[check_variant(variant)]
    return variant
