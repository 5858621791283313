"""The dynamic ±1 random walk driven by a field trajectory.

Exact laws are kept as log-masses on the lattice ``{-n, -n+2, ..., n}`` so
that tail probabilities far below the double-precision underflow threshold
remain representable.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import NumericalError, logsumexp, safeguarded_newton
from .dynsys import FieldTrajectory, SystemDescriptor, invariant_integral
from .landscape import field_cumulant, limit_cumulant

IMPOSSIBLE = -math.inf

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 200
_BRACKET_DOUBLINGS = 80


class DegenerateVarianceError(ValueError):
    """The walk has no fluctuations: ``∫ 4 f (1 - f) dμ`` vanishes."""


@dataclass(frozen=True)
class LatticeDistribution:
    """Exact law on ``{-n, -n+2, ..., n}``; entry ``j`` of ``log_mass`` is the point ``2j - n``."""

    n: int
    log_mass: np.ndarray
    law: str = "walk"

    def __post_init__(self):
        lm = np.asarray(self.log_mass, dtype=float)
        if lm.shape != (self.n + 1,):
            raise ValueError(f"expected {self.n + 1} log-masses, got {lm.shape}")
        lm = lm.copy()
        lm.setflags(write=False)
        object.__setattr__(self, "log_mass", lm)

    @property
    def support(self) -> np.ndarray:
        return 2 * np.arange(self.n + 1) - self.n

    @property
    def prob(self) -> np.ndarray:
        return np.exp(self.log_mass)

    def log_prob(self, k: int) -> float:
        if abs(k) > self.n or (k - self.n) % 2:
            return IMPOSSIBLE
        return float(self.log_mass[(k + self.n) // 2])

    def log_tail(self, threshold: float, upper: bool = True) -> float:
        """``log P(X >= threshold)`` (or ``<=`` when ``upper`` is false)."""
        k = self.support
        mask = k >= threshold - 1e-9 if upper else k <= threshold + 1e-9
        if not mask.any():
            return IMPOSSIBLE
        return float(logsumexp(self.log_mass[mask]))

    def log_mass_where(self, mask) -> float:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return IMPOSSIBLE
        return float(logsumexp(self.log_mass[mask]))

    def mean(self) -> float:
        return float(np.dot(self.prob, self.support))

    def variance(self) -> float:
        p = self.prob
        mu = np.dot(p, self.support)
        return float(np.dot(p, (self.support - mu) ** 2))

    def log_normalizer(self) -> float:
        return float(logsumexp(self.log_mass))

    def tilted(self, log_weight, law: str) -> "LatticeDistribution":
        """Reweight each atom by ``exp(log_weight(k))`` and renormalize."""
        lm = self.log_mass + np.asarray(log_weight(self.support), dtype=float)
        return LatticeDistribution(self.n, lm - logsumexp(lm), law)

    def to_csv(self, fh=None) -> str:
        """CSV with columns ``k, log_prob, prob`` in ascending ``k``."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["k", "log_prob", "prob"])
        for k, lp in zip(self.support.tolist(), self.log_mass.tolist()):
            w.writerow([k, repr(lp), repr(math.exp(lp))])
        return out.getvalue() if fh is None else ""


def _log_step_probs(p):
    with np.errstate(divide="ignore"):
        return np.log(p), np.log1p(-p)


def walk_distribution(traj: FieldTrajectory) -> LatticeDistribution:
    """Exact law of ``S_n`` (Poisson-binomial recursion in log space, O(n^2) time)."""
    up, down = _log_step_probs(traj.p)
    lm = np.zeros(1)
    for lu, ld in zip(up, down):
        nxt = np.empty(lm.size + 1)
        nxt[0] = lm[0] + ld
        nxt[-1] = lm[-1] + lu
        if lm.size > 1:
            nxt[1:-1] = np.logaddexp(lm[:-1] + lu, lm[1:] + ld)
        lm = nxt
    return LatticeDistribution(traj.n, lm, "walk")


def forward_table(traj: FieldTrajectory) -> list:
    """Every intermediate law: row ``i`` holds ``log P(j of the first i steps go up)``."""
    up, down = _log_step_probs(traj.p)
    rows = [np.zeros(1)]
    for lu, ld in zip(up, down):
        lm = rows[-1]
        nxt = np.empty(lm.size + 1)
        nxt[0] = lm[0] + ld
        nxt[-1] = lm[-1] + lu
        if lm.size > 1:
            nxt[1:-1] = np.logaddexp(lm[:-1] + lu, lm[1:] + ld)
        rows.append(nxt)
    return rows


def sample_walk(traj: FieldTrajectory, rng: np.random.Generator, size: Optional[int] = None):
    """Sample path(s) ``S_0, ..., S_n``; shape ``(n+1,)`` or ``(size, n+1)``."""
    shape = (traj.n,) if size is None else (size, traj.n)
    steps = np.where(rng.random(shape) < traj.p, 1, -1).astype(np.int64)
    path = np.zeros(shape[:-1] + (traj.n + 1,), dtype=np.int64)
    np.cumsum(steps, axis=-1, out=path[..., 1:])
    return path


def cgf_quenched(traj: FieldTrajectory, lam):
    """``(1/n) sum_i log(p_i e^lam + (1 - p_i) e^-lam)``; vectorized over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    flat = lam.reshape(-1)
    vals = np.array([np.mean(field_cumulant(traj.p, x, 0)) for x in flat])
    return vals.reshape(lam.shape)[()]


def cgf_limit(system: SystemDescriptor, lam, tol: float = 1e-12):
    """``Λ(lam) = ∫ log(f e^lam + (1 - f) e^-lam) dμ``."""
    return limit_cumulant(system, lam, 0, tol)


def legendre_transform(cgf: Callable, y, dcgf: Callable, d2cgf: Optional[Callable] = None,
                       edges=(math.inf, math.inf), bound: float = 1.0, return_argmax: bool = False):
    """Convex conjugate ``sup_lam {lam*y - cgf(lam)}``, vectorized over ``y``.

    The maximizer solves ``dcgf(lam) = y``; it is bracketed by doubling from
    [-1, 1] and polished by Newton with bisection fallback. ``edges`` gives the
    values at ``y = -bound`` and ``y = +bound`` (limits, not attained by any
    finite ``lam``); beyond ``bound`` the conjugate is ``+inf``. With
    ``return_argmax`` the maximizing ``lam`` is returned as well (``±inf`` at
    and beyond the edges).
    """
    y = np.asarray(y, dtype=float)
    out = np.full(y.shape, math.inf)
    out = np.where(y == -bound, edges[0], out)
    out = np.where(y == bound, edges[1], out)
    arg = np.where(y < 0, -math.inf, math.inf)
    inner = np.abs(y) < bound
    if not inner.any():
        return (out[()], arg[()]) if return_argmax else out[()]
    yi = y[inner]
    lo = np.full(yi.shape, -1.0)
    hi = np.full(yi.shape, 1.0)
    for _ in range(_BRACKET_DOUBLINGS):
        bad_lo = dcgf(lo) > yi
        bad_hi = dcgf(hi) < yi
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, 2.0 * lo, lo)
        hi = np.where(bad_hi, 2.0 * hi, hi)
    ok = (dcgf(lo) <= yi) & (dcgf(hi) >= yi)
    d2 = d2cgf if d2cgf is not None else (lambda x: np.full(np.shape(x), np.nan))
    lam, _ = safeguarded_newton(lambda x: dcgf(x) - yi, d2, lo, hi, tol=NEWTON_TOL,
                                maxiter=NEWTON_MAXITER)
    # the value at lam = 0 is a valid lower bound for the supremum
    val = np.maximum(lam * yi - cgf(lam), -np.asarray(cgf(np.zeros_like(yi))))
    out[inner] = np.where(ok, val, math.inf)
    arg[inner] = np.where(ok, lam, arg[inner])
    return (out[()], arg[()]) if return_argmax else out[()]


def conjugate_edges(system: SystemDescriptor, tol: float = 1e-12):
    """Conjugate values at ``y = -1`` and ``y = +1``: ``-∫ log(1 - f)`` and ``-∫ log f``."""
    if system.is_constant:
        p = system.value
        with np.errstate(divide="ignore"):
            return float(-np.log1p(-p)), float(-np.log(p))
    if system.is_torus_identity and system.integrator == "closed-form":
        return 1.0, 1.0

    def h(y):
        f = np.asarray(system.field(y), dtype=float)
        with np.errstate(divide="ignore"):
            return np.stack([np.log1p(-f), np.log(f)], axis=-1)

    try:
        lo, hi = invariant_integral(system, h, tol=1e-10)
    except (NumericalError, ValueError):
        return math.inf, math.inf
    return float(-lo) if np.isfinite(lo) else math.inf, float(-hi) if np.isfinite(hi) else math.inf


def walk_conjugate(system: SystemDescriptor, tol: float = 1e-12) -> Callable:
    """The function ``y -> Λ*(y)`` for the limiting walk cumulant of ``system``."""
    edges = conjugate_edges(system, tol)
    cgf = lambda x: limit_cumulant(system, x, 0, tol)
    d1 = lambda x: limit_cumulant(system, x, 1, tol)
    d2 = lambda x: limit_cumulant(system, x, 2, tol)
    return lambda y, **kw: legendre_transform(cgf, y, d1, d2, edges=edges, **kw)


@dataclass(frozen=True)
class RateFunctionSpec:
    """A rate function ``z -> I(z)`` together with its speed and parameters."""

    kind: str
    speed: str
    params: dict
    rate: Callable = field(compare=False, repr=False)

    def __call__(self, z):
        return self.rate(z)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "speed": self.speed, "params": dict(self.params)}


def walk_variance_constant(system: SystemDescriptor, tol: float = 1e-12) -> float:
    """``a = ∫ 4 f (1 - f) dμ``, the asymptotic variance per step."""
    return float(limit_cumulant(system, 0.0, 2, tol))


def walk_mdp_rate(system: SystemDescriptor, tol: float = 1e-12) -> RateFunctionSpec:
    """Moderate-deviation rate ``t^2 / (2a)`` for the centred walk at speed ``a_n^2 / n``."""
    a = walk_variance_constant(system, tol)
    if a <= 1e-12:
        raise DegenerateVarianceError(f"∫4f(1-f)dμ = {a:.3g}: the walk MDP needs a > 0")
    return RateFunctionSpec(kind="walk-mdp", speed="a_n^2/n", params={"a": a},
                            rate=lambda t: np.asarray(t, dtype=float) ** 2 / (2.0 * a))
