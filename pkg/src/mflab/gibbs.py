"""Curie-Weiss model in a site-dependent external field.

The Hamiltonian of a configuration ``sigma`` in {-1, +1}^n is

    H(sigma) = -(bJ / 2n) (sum_i sigma_i)^2 - (1/2) sum_i log(p_i / (1 - p_i)) sigma_i

and the Gibbs weight is ``exp(-H)``. Because the interaction only depends on
the magnetization ``M = sum_i sigma_i``, the Gibbs law of ``M`` is the law of
the dynamic walk with field ``p`` tilted by ``exp(bJ k^2 / 2n)``; all exact
computations here go through that identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from ._numerics import QuadratureError, logsumexp
from .dynsys import FieldTrajectory
from .landscape import eval_Gn
from .walk import LatticeDistribution, forward_table, walk_distribution

HS_WINDOW_NATS = 60.0


class InfiniteFieldError(ValueError):
    """A site has ``p_i`` in {0, 1}, so its field term ``log(p/(1-p))`` is infinite."""


@dataclass(frozen=True)
class ModelParams:
    beta: float
    J: float
    n: int

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.J > 0:
            raise ValueError("J must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")

    @property
    def bj(self) -> float:
        return self.beta * self.J


@dataclass(frozen=True)
class SpinConfiguration:
    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.int8)
        if s.ndim != 1 or not np.all(np.abs(s) == 1):
            raise ValueError("spins must be a 1-d sequence of ±1")
        object.__setattr__(self, "sigma", s)

    @property
    def magnetization(self) -> int:
        return int(self.sigma.sum())


def _check(traj: FieldTrajectory, params: ModelParams, strict: bool = True):
    if traj.n != params.n:
        raise ValueError(f"trajectory has length {traj.n} but the model has n={params.n}")
    if strict:
        bad = np.flatnonzero((traj.p <= 0.0) | (traj.p >= 1.0))
        if bad.size:
            i = int(bad[0])
            raise InfiniteFieldError(f"field value p[{i}] = {traj.p[i]} gives an infinite field term")


def hamiltonian_energy(sigma, traj: FieldTrajectory, params: ModelParams) -> float:
    sigma = sigma.sigma if isinstance(sigma, SpinConfiguration) else np.asarray(sigma)
    if sigma.shape != (params.n,):
        raise ValueError("configuration length does not match n")
    _check(traj, params)
    p = traj.p
    h = 0.5 * (np.log(p) - np.log1p(-p))
    m = float(np.sum(sigma))
    return -params.bj / (2.0 * params.n) * m * m - float(np.dot(h, sigma))


def _tilt(params: ModelParams):
    c = params.bj / (2.0 * params.n)
    return lambda k: c * np.asarray(k, dtype=float) ** 2


def magnetization_distribution(traj: FieldTrajectory, params: ModelParams) -> LatticeDistribution:
    """Exact Gibbs law of ``M_n``."""
    _check(traj, params, strict=False)
    return walk_distribution(traj).tilted(_tilt(params), "magnetization")


def log_partition(traj: FieldTrajectory, params: ModelParams) -> float:
    """``log Z = log sum_sigma exp(-H(sigma))``, no counting factor.

    Writing ``exp(h_i sigma_i) = P(X_i = sigma_i) / sqrt(p_i (1 - p_i))`` turns
    the sum into ``E[exp(bJ S_n^2 / 2n)] / prod_i sqrt(p_i (1 - p_i))``.
    """
    _check(traj, params)
    w = walk_distribution(traj)
    lm = w.log_mass + _tilt(params)(w.support)
    p = traj.p
    return float(logsumexp(lm) - 0.5 * np.sum(np.log(p) + np.log1p(-p)))


class ConfigurationSampler:
    """Exact sampler for the Gibbs measure.

    Draws ``M_n`` from its exact law, then the spins from the independent
    Bernoulli field conditioned on the number of up spins, walking the forward
    table backwards.
    """

    def __init__(self, traj: FieldTrajectory, params: ModelParams):
        _check(traj, params, strict=False)
        self.traj = traj
        self.params = params
        self._rows = forward_table(traj)
        lm = self._rows[-1] + _tilt(params)(2 * np.arange(traj.n + 1) - traj.n)
        self.law = LatticeDistribution(traj.n, lm - logsumexp(lm), "magnetization")
        with np.errstate(divide="ignore"):
            self._log_up = np.log(traj.p)

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Array of shape ``(size, n)`` with entries ±1."""
        n = self.traj.n
        probs = self.law.prob
        ups = rng.choice(n + 1, size=size, p=probs / probs.sum())
        out = np.empty((size, n), dtype=np.int8)
        u = rng.random((size, n))
        for i in range(n, 0, -1):
            prev = self._rows[i - 1]
            cur = self._rows[i]
            j = ups
            with np.errstate(invalid="ignore"):
                lp = self._log_up[i - 1] + prev[np.clip(j - 1, 0, i - 1)] - cur[j]
            p_up = np.where(j == 0, 0.0, np.where(j == i, 1.0, np.exp(np.nan_to_num(lp, nan=-np.inf))))
            go_up = u[:, i - 1] < p_up
            out[:, i - 1] = np.where(go_up, 1, -1)
            ups = ups - go_up
        return out


def sample_configuration(traj: FieldTrajectory, params: ModelParams, rng: np.random.Generator,
                         size: int = None):
    """One configuration (or ``size`` of them) drawn exactly from the Gibbs measure."""
    draws = ConfigurationSampler(traj, params).sample(rng, 1 if size is None else size)
    return SpinConfiguration(draws[0]) if size is None else draws


def _log_hs_integrand(traj, bj, m, alpha):
    n = traj.n
    scale = n ** (alpha - 1.0)
    return lambda s: -n * np.asarray(eval_Gn(traj, bj, m + np.asarray(s, dtype=float) * scale, 0))


def hs_log_normalizer(traj: FieldTrajectory, params: ModelParams, m: float, alpha: float):
    """``log ∫ exp(-n G_n(m + u n^{alpha-1})) du``, by quadrature around the peak."""
    _check(traj, params, strict=False)
    if not 0.5 < alpha <= 1.0:
        raise ValueError("alpha must lie in (1/2, 1]")
    bj = params.bj
    n = traj.n
    scale = n ** (alpha - 1.0)
    logf = _log_hs_integrand(traj, bj, m, alpha)
    # G_n is bounded below and grows like bJ t^2/2, so its minimizers lie in [-1, 1]
    t = np.linspace(-1.5, 1.5, 3001)
    g = eval_Gn(traj, bj, t, 0)
    peaks = []
    for i in range(1, t.size - 1):
        if g[i] <= g[i - 1] and g[i] <= g[i + 1]:
            res = optimize.minimize_scalar(lambda x: float(eval_Gn(traj, bj, x, 0)),
                                           bracket=(t[i - 1], t[i], t[i + 1]))
            peaks.append(float(res.x))
    if not peaks:
        peaks = [float(t[np.argmin(g)])]
    peaks_s = sorted((pk - m) / scale for pk in peaks)
    top = max(float(logf(s)) for s in peaks_s)

    def edge(start, direction):
        step = 1.0 / math.sqrt(max(n * bj, 1e-12)) / scale
        x = start
        while float(logf(x)) > top - HS_WINDOW_NATS:
            x += direction * step
            step *= 1.5
        return x

    lo, hi = edge(peaks_s[0], -1.0), edge(peaks_s[-1], 1.0)
    val, err = integrate.quad(lambda s: math.exp(float(logf(s)) - top), lo, hi,
                              points=[p for p in peaks_s if lo < p < hi] or None,
                              epsabs=0.0, epsrel=1e-13, limit=500)
    if not val > 0 or err > 1e-9 * val:
        raise QuadratureError(f"normalizing integral not resolved (error estimate {err:.3g})",
                              estimate=err)
    return top + math.log(val), peaks_s


def hs_density(traj: FieldTrajectory, params: ModelParams, m: float, alpha: float, s):
    """Density at ``s`` of ``(M_n - n m)/n^alpha + W/n^(alpha - 1/2)``, ``W ~ N(0, 1/bJ)``.

    Equal to ``exp(-n G_n(m + s n^(alpha-1)))`` normalized over ``s``.
    """
    log_z, _ = hs_log_normalizer(traj, params, m, alpha)
    logf = _log_hs_integrand(traj, params.bj, m, alpha)
    return np.exp(logf(s) - log_z)[()]


def gaussian_smoothed_density(law: LatticeDistribution, params: ModelParams, m: float,
                              alpha: float, s):
    """Density of the same variable computed directly from the exact law of ``M_n``."""
    n = law.n
    s = np.asarray(s, dtype=float)
    centres = (law.support - n * m) / n ** alpha
    var = 1.0 / (params.bj * n ** (2.0 * alpha - 1.0))
    z = (s[..., None] - centres) ** 2 / (2.0 * var)
    lg = law.log_mass - z - 0.5 * math.log(2.0 * math.pi * var)
    return np.exp(logsumexp(lg, axis=-1))[()]
