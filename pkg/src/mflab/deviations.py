"""Rate functions for the magnetization and finite-n checks of the limit theorems.

Every check here works from exact finite-n objects: lattice laws from
:mod:`mflab.walk` and :mod:`mflab.gibbs`, and the landscapes ``G_n`` from
:mod:`mflab.landscape`. Nothing is sampled.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from ._numerics import safeguarded_newton
from .dynsys import SystemDescriptor, orbit
from .gibbs import ModelParams, magnetization_distribution
from .landscape import (MinimumProfile, eval_G, eval_Gn, limit_cumulant,
                        stationary_points)
from .walk import (IMPOSSIBLE, RateFunctionSpec, walk_conjugate, walk_distribution,
                   walk_mdp_rate)


class InvalidVarianceError(ValueError):
    """``1/lambda - 1/(beta J)`` is not positive at a quadratic minimum."""


class EmptyEventError(ValueError):
    """The tail event (or the conditioning window) contains no lattice point."""


# -- large deviations ------------------------------------------------------------

def _ldp_offset(system, bj, conj, grid=2001):
    """``inf_{z in [-1, 1]} {Λ*(z) - bj z^2/2}`` by grid scan and Newton polishing."""
    z = np.linspace(-1.0, 1.0, grid)
    vals = conj(z) - 0.5 * bj * z * z
    best = float(np.min(vals))
    h = z[1] - z[0]
    for i in range(1, grid - 1):
        if not (vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]):
            continue

        # d/dz [Λ*(z) - bj z^2/2] = λ(z) - bj z, where Λ'(λ(z)) = z
        def slope(x):
            _, lam = conj(x, return_argmax=True)
            return lam - bj * x

        def curvature(x):
            _, lam = conj(x, return_argmax=True)
            return 1.0 / limit_cumulant(system, lam, 2) - bj

        lo, hi = max(-1.0 + 1e-15, z[i] - h), min(1.0 - 1e-15, z[i] + h)
        if slope(lo) <= 0 <= slope(hi):
            x, _ = safeguarded_newton(slope, curvature, lo, hi, x0=z[i], tol=1e-14)
            x = float(x)
            best = min(best, float(conj(x)) - 0.5 * bj * x * x)
    return best


def ldp_rate_magnetization(system: SystemDescriptor, bj: float, s):
    """Large-deviation rate of the mean magnetization at speed ``n``.

    ``Λ*(s) - bj s^2/2 - inf_z {Λ*(z) - bj z^2/2}``; ``+inf`` outside [-1, 1].
    """
    if bj <= 0:
        raise ValueError("beta*J must be positive")
    conj = walk_conjugate(system)
    s = np.asarray(s, dtype=float)
    offset = _ldp_offset(system, bj, conj)
    out = np.where(np.abs(s) <= 1.0, conj(np.clip(s, -1.0, 1.0)) - 0.5 * bj * s * s - offset, math.inf)
    return out[()]


def ldp_rate_derivative(system: SystemDescriptor, bj: float, s):
    """``d/ds`` of the magnetization rate on (-1, 1): ``λ(s) - bj s`` with ``Λ'(λ(s)) = s``."""
    _, lam = walk_conjugate(system)(s, return_argmax=True)
    return (lam - bj * np.asarray(s, dtype=float))[()]


def ldp_rate_zeros(system: SystemDescriptor, bj: float, grid: int = 2001, tol: float = 1e-8) -> list:
    """Zeros of the magnetization rate: sign changes (- to +) of its derivative, bisected to
    full precision, at which the rate vanishes to within ``tol``.

    Bisection only needs the sign change, so flat (higher-order) zeros are located as sharply
    as quadratic ones.
    """
    z = np.linspace(-1.0, 1.0, grid)[1:-1]
    d = ldp_rate_derivative(system, bj, z)
    out = []
    for i in range(d.size - 1):
        if not (d[i] < 0 <= d[i + 1]):
            continue
        if d[i + 1] == 0:
            x = float(z[i + 1])
        else:
            x = optimize.brentq(lambda u: float(ldp_rate_derivative(system, bj, u)), z[i], z[i + 1],
                                xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if abs(float(ldp_rate_magnetization(system, bj, x))) <= tol:
            out.append(float(x))
    return out


# -- moderate deviations -------------------------------------------------------

def _effective_strength(two_k, lam, bj):
    if two_k == 2:
        if not lam < bj:
            raise InvalidVarianceError(
                f"strength {lam} must be below beta*J={bj} for a positive variance")
        return 1.0 / (1.0 / lam - 1.0 / bj)
    if lam <= 0:
        raise ValueError("strength must be positive")
    return lam


def mdp_rate_magnetization(profile: MinimumProfile, bj: float) -> RateFunctionSpec:
    """Rate function of ``(M_n - n m)/n^alpha`` at speed ``n^(1 - 2k + 2k alpha)``."""
    two_k, lam = profile.two_k, profile.strength
    k = two_k // 2
    params = {"k": k, "lambda": lam, "beta_J": bj, "alpha_range": [1.0 - 1.0 / two_k, 1.0]}
    if k == 1:
        if not lam < bj:
            raise InvalidVarianceError(
                f"strength {lam} must be below beta*J={bj} for a positive variance")
        var = 1.0 / lam - 1.0 / bj
        params["sigma2"] = var
        rate = lambda z: np.asarray(z, dtype=float) ** 2 / (2.0 * var)
    else:
        c = lam / math.factorial(two_k)
        rate = lambda z: c * np.asarray(z, dtype=float) ** two_k
    return RateFunctionSpec(kind="magnetization-mdp", speed=f"n^(1-{two_k}+{two_k}*alpha)",
                            params=params, rate=rate)


def speed_exponent(two_k: int, alpha: float) -> float:
    return 1.0 - two_k + two_k * alpha


def check_alpha(two_k: int, alpha: float):
    lo = 1.0 - 1.0 / two_k
    if not lo < alpha < 1.0:
        raise ValueError(f"alpha={alpha} outside the admissible range ({lo}, 1) for type {two_k}")


def clt_limit_density(two_k: int, lam: float, bj: float, s):
    """Density ``C exp(-lam_eff s^2k / (2k)!)`` of the fluctuation limit law.

    ``lam_eff = (1/lam - 1/bj)^-1`` for ``2k = 2`` and ``lam`` otherwise; the
    constant uses ``∫ exp(-c u^2k) du = Γ(1/2k) c^(-1/2k) / k``.
    """
    if two_k < 2 or two_k % 2:
        raise ValueError("type must be a positive even integer")
    k = two_k // 2
    leff = _effective_strength(two_k, lam, bj)
    c = leff / math.factorial(two_k)
    log_norm = gammaln(1.0 / two_k) - math.log(c) / two_k - math.log(k)
    s = np.asarray(s, dtype=float)
    return np.exp(-c * np.abs(s) ** two_k - log_norm)[()]


# -- verdicts -------------------------------------------------------------------

@dataclass
class DeviationVerdict:
    """Scaled log-probabilities ``r_n = -log P_n / speed(n)`` against a target rate."""

    target: float
    grid: List[int]
    speeds: List[float]
    log_probs: List[float]
    window: Optional[float] = None
    label: str = ""

    @property
    def r(self) -> List[float]:
        return [-lp / sp for lp, sp in zip(self.log_probs, self.speeds)]

    @property
    def errors(self) -> List[float]:
        return [abs(x - self.target) for x in self.r]

    @property
    def trend(self) -> bool:
        """Errors non-increasing over the last three grid points."""
        e = self.errors[-3:]
        return all(b <= a for a, b in zip(e, e[1:]))

    @property
    def relative_error(self) -> float:
        return self.errors[-1] / abs(self.target) if self.target else math.inf

    def to_dict(self) -> dict:
        return {"target": self.target, "grid": list(self.grid), "r": self.r, "err": self.errors,
                "trend": self.trend, "window": self.window}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "speed", "log_prob", "r_n", "err"])
        for row in zip(self.grid, self.speeds, self.log_probs, self.r, self.errors):
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return out.getvalue()


def verify_walk_mdp(system: SystemDescriptor, x0: float, theta: float, t: float,
                    n_grid: Sequence[int], max_n: int = 20_000) -> DeviationVerdict:
    """Exact check of the walk MDP: ``P(S_n - E S_n >= t n^theta)`` on each ``n``."""
    if not 0.5 < theta < 1.0:
        raise ValueError("theta must lie in (1/2, 1)")
    if t <= 0:
        raise ValueError("t must be positive")
    rate = walk_mdp_rate(system)
    speeds, lps = [], []
    for n in n_grid:
        n = int(n)
        if n > max_n:
            raise ValueError(f"n={n} exceeds the exact-law limit {max_n}")
        traj = orbit(system, x0, n)
        an = n ** theta
        threshold = t * an + float(np.sum(2.0 * traj.p - 1.0))
        if threshold > n:
            raise EmptyEventError(f"threshold {threshold:.6g} exceeds the walk range n={n}")
        lp = walk_distribution(traj).log_tail(threshold)
        if lp == IMPOSSIBLE:
            raise EmptyEventError(f"tail event is empty at n={n}")
        speeds.append(an * an / n)
        lps.append(lp)
    return DeviationVerdict(target=float(rate(t)), grid=[int(n) for n in n_grid], speeds=speeds,
                            log_probs=lps, label="walk-mdp")


def default_window(profile: MinimumProfile, stationary: Sequence[float]) -> float:
    """Conditioning radius: 0.3, or half the distance to the nearest other stationary point or to ±1."""
    m = profile.m
    a = min(0.3, 0.5 * (1.0 - abs(m)))
    others = [abs(s - m) for s in stationary if abs(s - m) > 1e-6]
    if others:
        a = min(a, 0.5 * min(others))
    return a


def magnetization_tail(law, m: float, alpha: float, z: float, window: Optional[float] = None):
    """``log P((M_n - n m)/n^alpha >= z)`` (``<= z`` for negative ``z``), optionally conditioned
    on ``M_n/n`` in ``[m - a, m + a]``."""
    n = law.n
    k = law.support
    x = (k - n * m) / n ** alpha
    eps = 1e-9
    event = x >= z - eps if z > 0 else x <= z + eps
    if window is not None:
        inside = np.abs(k / n - m) <= window + eps
        if not inside.any():
            raise EmptyEventError(f"conditioning window [m-{window}, m+{window}] is empty at n={n}")
        lp = law.log_mass_where(event & inside)
        if lp == IMPOSSIBLE:
            raise EmptyEventError(f"conditioned tail event is empty at n={n}")
        return lp - law.log_mass_where(inside)
    lp = law.log_mass_where(event)
    if lp == IMPOSSIBLE:
        raise EmptyEventError(f"tail event is empty at n={n}")
    return lp


def verify_magnetization_mdp(system: SystemDescriptor, x0: float, beta: float, J: float,
                             n_grid: Sequence[int], profile: MinimumProfile, alpha: float,
                             z: float, window: Optional[float] = None,
                             max_n: int = 20_000) -> DeviationVerdict:
    """Exact check of the magnetization MDP on ``n_grid``, conditioned when ``window`` is set."""
    check_alpha(profile.two_k, alpha)
    if z == 0:
        raise ValueError("z must be nonzero")
    if window is not None and not window > 0:
        raise ValueError("window must be positive")
    bj = beta * J
    rate = mdp_rate_magnetization(profile, bj)
    expo = speed_exponent(profile.two_k, alpha)
    speeds, lps = [], []
    for n in n_grid:
        n = int(n)
        if n > max_n:
            raise ValueError(f"n={n} exceeds the exact-law limit {max_n}")
        law = magnetization_distribution(orbit(system, x0, n), ModelParams(beta, J, n))
        lps.append(magnetization_tail(law, profile.m, alpha, z, window))
        speeds.append(n ** expo)
    return DeviationVerdict(target=float(rate(abs(z))), grid=[int(n) for n in n_grid],
                            speeds=speeds, log_probs=lps, window=window,
                            label="magnetization-mdp")


# -- landscape scaling ------------------------------------------------------------

@dataclass
class ScalingTable:
    grid: List[int]
    s: np.ndarray
    errors: np.ndarray            # (len(grid), len(s))
    radius: float
    bound_s: List[np.ndarray] = field(default_factory=list)
    bound_ok: List[np.ndarray] = field(default_factory=list)

    @property
    def sup_errors(self) -> List[float]:
        return np.max(np.abs(self.errors), axis=1).tolist()

    @property
    def bound_holds(self) -> List[bool]:
        return [bool(np.all(b)) for b in self.bound_ok]

    @property
    def bound_from(self) -> Optional[int]:
        """Smallest grid ``n`` from which the lower bound holds at every later grid point."""
        first = None
        for n, ok in zip(reversed(self.grid), reversed(self.bound_holds)):
            if not ok:
                break
            first = n
        return first

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["n", "sup_error", "lower_bound_holds"])
        for n, e, ok in zip(self.grid, self.sup_errors, self.bound_holds):
            w.writerow([n, repr(e), int(ok)])
        return out.getvalue()


def lower_bound_radius(system: SystemDescriptor, bj: float, profile: MinimumProfile,
                       points: int = 401) -> float:
    """``r = min((2k+1) lam / (4 M), 1)`` with ``M = max |G^(2k+1)|`` on ``[m-1, m+1]``."""
    two_k = profile.two_k
    s = np.linspace(profile.m - 1.0, profile.m + 1.0, points)
    bound = float(np.max(np.abs(eval_G(system, bj, s, two_k + 1))))
    if bound == 0.0:
        return 1.0
    return min((two_k + 1) * profile.strength / (4.0 * bound), 1.0)


def scaled_difference(traj, bj, m, alpha, two_k, s):
    """``n^(2k(1-alpha)) (G_n(m + s n^(alpha-1)) - G_n(m))``."""
    n = traj.n
    s = np.asarray(s, dtype=float)
    g0 = float(eval_Gn(traj, bj, m, 0))
    return n ** (two_k * (1.0 - alpha)) * (eval_Gn(traj, bj, m + s * n ** (alpha - 1.0), 0) - g0)


def scaling_limit_check(system: SystemDescriptor, x0: float, n_grid: Sequence[int], bj: float,
                        profile: MinimumProfile, alpha: float, s_grid: Sequence[float],
                        radius: Optional[float] = None, bound_points: int = 201) -> ScalingTable:
    """Distance of the rescaled landscape from its ``lam s^2k/(2k)!`` limit, per ``n``.

    Also evaluates, on ``|s| <= r n^(1-alpha)``, the lower bound
    ``scaled difference >= (lam/2) s^2k/(2k)! - sum_{j<2k} |s|^j``.
    """
    check_alpha(profile.two_k, alpha)
    two_k, lam, m = profile.two_k, profile.strength, profile.m
    s = np.asarray(s_grid, dtype=float)
    limit = lam * s ** two_k / math.factorial(two_k)
    r = lower_bound_radius(system, bj, profile) if radius is None else radius
    rows, bs, bok = [], [], []
    for n in n_grid:
        traj = orbit(system, x0, int(n))
        rows.append(scaled_difference(traj, bj, m, alpha, two_k, s) - limit)
        R = r * int(n) ** (1.0 - alpha)
        sb = np.union1d(s[np.abs(s) <= R], np.linspace(-R, R, bound_points))
        lhs = scaled_difference(traj, bj, m, alpha, two_k, sb)
        rhs = 0.5 * lam * sb ** two_k / math.factorial(two_k) - sum(
            np.abs(sb) ** j for j in range(1, two_k))
        bs.append(sb)
        bok.append(lhs >= rhs)
    return ScalingTable(grid=[int(n) for n in n_grid], s=s, errors=np.array(rows), radius=r,
                        bound_s=bs, bound_ok=bok)


# -- finite-n landscape checks ------------------------------------------------------

def uniform_convergence_check(system: SystemDescriptor, x0: float, bj: float,
                              n_grid: Sequence[int], s_grid: Sequence[float],
                              orders: Sequence[int] = (0,)) -> dict:
    """``sup_s |G_n^(j)(s) - G^(j)(s)|`` for each order and each ``n``."""
    s = np.asarray(s_grid, dtype=float)
    ref = {j: eval_G(system, bj, s, j) for j in orders}
    out = {j: [] for j in orders}
    for n in n_grid:
        traj = orbit(system, x0, int(n))
        for j in orders:
            out[j].append(float(np.max(np.abs(eval_Gn(traj, bj, s, j) - ref[j]))))
    return out


def tail_bound_check(system: SystemDescriptor, x0: float, bj: float, lo: float, hi: float,
                     n_grid: Sequence[int], g: Optional[float] = None) -> List[float]:
    """``log(e^{n g} ∫_lo^hi e^{-n G_n(s)} ds)`` for each ``n``.

    ``g`` defaults to the minimum value of ``G``.
    """
    if g is None:
        g = min(float(eval_G(system, bj, s0, 0)) for s0, kind in stationary_points(system, bj)
                if kind == "min")
    out = []
    for n in n_grid:
        traj = orbit(system, x0, int(n))
        u = np.linspace(lo, hi, 2001)
        e = -int(n) * eval_Gn(traj, bj, u, 0)
        top = float(np.max(e))
        val, _ = integrate.quad(lambda x: math.exp(-int(n) * float(eval_Gn(traj, bj, x, 0)) - top),
                                lo, hi, points=[float(u[np.argmax(e)])] if lo < u[np.argmax(e)] < hi else None,
                                epsrel=1e-10, limit=500)
        out.append(int(n) * g + top + math.log(val))
    return out


# -- Laplace limit ----------------------------------------------------------------

def _maximize(f, M, points=2001):
    x = np.linspace(-M, M, points)
    v = np.array([float(f(t)) for t in x])
    i = int(np.argmax(v))
    h = x[1] - x[0]
    lo, hi = max(-M, x[i] - h), min(M, x[i] + h)
    res = optimize.minimize_scalar(lambda t: -float(f(t)), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-13})
    cands = [(v[i], x[i]), (-res.fun, res.x), (float(f(-M)), -M), (float(f(M)), M)]
    best = max(cands)
    return float(best[0]), float(best[1])


def laplace_limit_check(f: Callable, M: float, gammas: Sequence[float]) -> dict:
    """``(1/γ) log ∫_{|x|<=M} e^{γ f(x)} dx`` against ``max_{|x|<=M} f`` for each ``γ``."""
    if M <= 0:
        raise ValueError("M must be positive")
    g = np.asarray(gammas, dtype=float)
    if g.size == 0 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("gammas must be increasing and positive")
    fmax, xmax = _maximize(f, M)
    cuts = sorted({-M, M, xmax} | {min(M, max(-M, xmax + sgn * M * 10.0 ** -j))
                                   for j in range(1, 10) for sgn in (-1, 1)})
    values = []
    for gam in g:
        total = 0.0
        for a, b in zip(cuts, cuts[1:]):
            if b > a:
                part, _ = integrate.quad(lambda x: math.exp(gam * (float(f(x)) - fmax)), a, b,
                                         epsabs=0.0, epsrel=1e-12, limit=200)
                total += part
        values.append(fmax + math.log(total) / gam)
    return {"gammas": g.tolist(), "values": values, "max": fmax, "argmax": xmax,
            "limit_error": [abs(v - fmax) for v in values]}
