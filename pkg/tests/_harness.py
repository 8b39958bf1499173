"""Test-only models and exact oracles."""

import math

import numpy as np

from svleverage import rng as streams
from svleverage.model import LatentState


class LocalLevelModel:
    """Gaussian random walk observed with noise.

    ``x_1 ~ N(m0, p0)``, ``x_t = x_{t-1} + q w_t`` and ``y_t = x_t + r v_t``.
    The state lives in ``LatentState.h`` so the filter can treat it like a
    volatility model.
    """

    variant = "local_level"
    param_names = ("m0", "p0", "q", "r")
    ivp_names = ()

    def param_dict(self, values):
        return dict(values)

    def draw_noise(self, rng, t, size):
        return {"w": rng.normal(streams.OMEGA, t, size)}

    def init_states(self, p, rng, size):
        z = rng.normal(streams.INIT, 0, size)
        return LatentState(p["m0"] + math.sqrt(p["p0"]) * z)

    def propagate(self, state, y_prev, p, noise, t=None):
        return LatentState(state.h + p["q"] * noise["w"])

    def obs_logdensity(self, y, state):
        r = self._r
        return -0.5 * math.log(2 * math.pi * r * r) - 0.5 * ((y - state.h) / r) ** 2

    def sort_key(self, state):
        return state.h

    def summaries(self, y, state, p, w):
        return {"h": state.h, "rho": np.zeros_like(state.h), "eps": y - state.h}

    def with_obs_sd(self, r):
        self._r = r
        return self


def simulate_local_level(p, T, seed):
    g = np.random.default_rng(seed)
    x = p["m0"] + math.sqrt(p["p0"]) * g.standard_normal() + np.concatenate(
        [[0.0], np.cumsum(p["q"] * g.standard_normal(T - 1))])
    return x + p["r"] * g.standard_normal(T)


def kalman_loglik(y, p):
    """Exact log-likelihood of the local-level model."""
    m, P = p["m0"], p["p0"]
    q2, r2 = p["q"] ** 2, p["r"] ** 2
    ll = 0.0
    for t, yt in enumerate(y):
        if t > 0:
            P = P + q2
        S = P + r2
        e = yt - m
        ll += -0.5 * (math.log(2 * math.pi * S) + e * e / S)
        K = P / S
        m = m + K * e
        P = (1 - K) * P
    return ll


LOCAL_LEVEL = {"m0": 0.0, "p0": 1.0, "q": 0.3, "r": 0.8}


def local_level_model(p=LOCAL_LEVEL):
    return LocalLevelModel().with_obs_sd(p["r"])
