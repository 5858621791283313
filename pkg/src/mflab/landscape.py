"""Free-energy landscape of the mean-field model.

``L(phi, s) = log(phi e^s + (1 - phi) e^-s)`` is the cumulant generating
function of a single ±1 spin with up-probability ``phi``. Averaging it over the
field gives the functions

    G(s)   = bJ s^2 / 2 - ∫ L(f(y), bJ s) dμ(y)
    G_n(s) = bJ s^2 / 2 - (1/n) sum_i L(p_i, bJ s)

whose minimizers, and the order and size of the first nonvanishing derivative
at each of them, control every limit theorem for the magnetization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from ._numerics import NumericalError, log_cosh, safeguarded_newton, sech2
from .dynsys import FieldTrajectory, SystemDescriptor, invariant_integral

MAX_ORDER = 12
_SERIES_CUTOFF = 1e-3


class UnsupportedOrderError(ValueError):
    pass


class ClassificationError(NumericalError):
    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class UnsupportedBranchError(ValueError):
    pass


class BracketError(ValueError):
    pass


def _tanh_polynomials():
    # d^j/ds^j L = (1 - u^2) Q_j(u) for j >= 2, u = tanh(s + c)
    one = Polynomial([1.0])
    u = Polynomial([0.0, 1.0])
    w = Polynomial([1.0, 0.0, -1.0])
    qs = {2: one}
    for j in range(2, MAX_ORDER):
        q = qs[j]
        qs[j + 1] = -2.0 * u * q + w * q.deriv()
    return qs


_Q = _tanh_polynomials()


def _check_order(order):
    if order < 0 or order > MAX_ORDER or int(order) != order:
        raise UnsupportedOrderError(f"derivative order {order} not supported (0..{MAX_ORDER})")


def field_cumulant(phi, s, order: int = 0):
    """``d^order/ds^order L(phi, s)``; broadcasts over ``phi`` and ``s``.

    Order 0 uses ``log1p(phi*expm1(2s)) - s`` (exact at ``phi`` in {0, 1}, accurate
    for small ``s``) and switches to the shifted log-cosh form for large ``|s|``.
    Higher orders are polynomials in ``u = tanh(s + c)`` with
    ``c = artanh(2 phi - 1)``.
    """
    _check_order(order)
    phi = np.asarray(phi, dtype=float)
    s = np.asarray(s, dtype=float)
    if order == 0:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            small = np.abs(s) <= 300.0
            ss = np.where(small, s, 0.0)
            pos = ss >= 0
            near = np.where(pos, np.log1p(phi * np.expm1(2.0 * ss)) - ss,
                            np.log1p((1.0 - phi) * np.expm1(-2.0 * ss)) + ss)
            if np.all(small):
                return near[()]
            c = 0.5 * (np.log(phi) - np.log1p(-phi))
            far = log_cosh(s + c) - log_cosh(c)
            far = np.where(phi >= 1.0, s, np.where(phi <= 0.0, -s, far))
            return np.where(small, near, far)[()]
    with np.errstate(divide="ignore"):
        c = 0.5 * (np.log(phi) - np.log1p(-phi))
    x = s + c
    u = np.tanh(x)
    if order == 1:
        return u[()]
    return (sech2(x) * _Q[order](u))[()]


# -- the limiting cumulant ----------------------------------------------------

def _torus_identity_cumulant(t, order):
    """``∫_0^1 d^j/dt^j L(y, t) dy`` in closed form for ``j <= 2``; ``None`` otherwise.

    Uses ``∫ L(y, t) dy = t coth t - 1`` and its derivatives.
    """
    t = np.asarray(t, dtype=float)
    if order > 2:
        return None
    a = np.abs(t)
    small = a < _SERIES_CUTOFF
    tt = np.where(small, 1.0, t)
    e = np.exp(-2.0 * np.abs(tt))
    coth = np.sign(tt) * (1.0 + e) / (-np.expm1(-2.0 * np.abs(tt)))
    csch2 = 4.0 * e / np.expm1(-2.0 * np.abs(tt)) ** 2
    t2 = t * t
    if order == 0:
        series = t2 * (1 / 3 - t2 * (1 / 45 - t2 * (2 / 945 - t2 * (1 / 4725 - t2 * 2 / 93555))))
        exact = tt * coth - 1.0
    elif order == 1:
        series = t * (2 / 3 - t2 * (4 / 45 - t2 * (12 / 945 - t2 * (8 / 4725 - t2 * 20 / 93555))))
        exact = coth - tt * csch2
    else:
        series = 2 / 3 - t2 * (12 / 45 - t2 * (60 / 945 - t2 * (56 / 4725 - t2 * 180 / 93555)))
        exact = 2.0 * csch2 * (tt * coth - 1.0)
    return np.where(small, series, exact)[()]


def limit_cumulant(system: SystemDescriptor, t, order: int = 0, tol: float = 1e-12):
    """``∫ d^j/dt^j L(f(y), t) dμ(y)``, i.e. the j-th derivative of ``Λ(t)``.

    Vectorized over ``t``.
    """
    _check_order(order)
    t = np.asarray(t, dtype=float)
    if system.is_constant:
        return field_cumulant(system.value, t, order)
    if system.is_torus_identity and system.integrator == "closed-form":
        v = _torus_identity_cumulant(t, order)
        if v is not None:
            return v
    flat = t.reshape(-1)

    def h(y):
        phi = np.asarray(system.field(y), dtype=float)
        return field_cumulant(phi[..., None], flat, order)

    out = invariant_integral(system, h, tol)
    return np.asarray(out, dtype=float).reshape(t.shape)[()]


def _poly_part(bj, s, order):
    if order == 0:
        return 0.5 * bj * s * s
    if order == 1:
        return bj * s
    if order == 2:
        return np.full(np.shape(s), bj)[()]
    return np.zeros(np.shape(s))[()]


def eval_G(system: SystemDescriptor, bj: float, s, order: int = 0, tol: float = 1e-12):
    """``G^{(order)}(s)`` for coupling ``bj = beta*J``; vectorized over ``s``."""
    _check_order(order)
    if bj <= 0:
        raise ValueError("beta*J must be positive")
    s = np.asarray(s, dtype=float)
    return (_poly_part(bj, s, order) - bj ** order * limit_cumulant(system, bj * s, order, tol))[()]


def _field_mean(p, t, order, block=4_000_000):
    """``(1/n) sum_i d^j L(p_i, t)`` for every entry of ``t``, in memory-bounded blocks."""
    t = np.asarray(t, dtype=float)
    flat = t.reshape(-1)
    out = np.empty(flat.size)
    step = max(1, block // max(1, p.size))
    for a in range(0, flat.size, step):
        chunk = flat[a:a + step]
        out[a:a + step] = np.mean(field_cumulant(p[:, None], chunk[None, :], order), axis=0)
    return out.reshape(t.shape)[()]


def eval_Gn(traj: FieldTrajectory, bj: float, s, order: int = 0):
    """Finite-volume landscape ``G_n^{(order)}(s)`` along a field trajectory."""
    _check_order(order)
    if bj <= 0:
        raise ValueError("beta*J must be positive")
    s = np.asarray(s, dtype=float)
    return (_poly_part(bj, s, order) - bj ** order * _field_mean(traj.p, bj * s, order))[()]


# -- minima -------------------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    rel: float = 1e-6           # derivative treated as zero below rel * max(1, bj^j)
    value: float = 1e-9         # global-minimum value band
    grid: int = 4001
    near_degenerate: float = 1e-4
    max_order: int = MAX_ORDER


@dataclass(frozen=True)
class MinimumProfile:
    m: float
    two_k: int
    strength: float
    is_global: bool
    value: float
    warnings: tuple = ()
    derivatives: tuple = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.two_k // 2

    def to_dict(self) -> dict:
        return {"m": self.m, "two_k": self.two_k, "lambda": self.strength, "value": self.value,
                "global": self.is_global, "warnings": list(self.warnings)}


def _scale(bj, j):
    return max(1.0, bj ** j)


def stationary_points(system: SystemDescriptor, bj: float, tolerances: Tolerances = Tolerances()):
    """Sign changes of ``G'`` on (-1, 1), each polished to a root.

    Returns a list of ``(s, kind)`` with kind ``"min"`` or ``"max"``.
    """
    eps = 1e-9
    s = np.linspace(-1.0 + eps, 1.0 - eps, tolerances.grid)
    d = eval_G(system, bj, s, 1)
    out = []
    i = 0
    while i < s.size - 1:
        a, b = d[i], d[i + 1]
        if a == 0.0:
            kind = _kind_at(d, i)
            if kind:
                out.append((float(s[i]), kind))
            i += 1
            continue
        if a * b < 0:
            sign = 1.0 if a < 0 else -1.0
            fun = lambda x: sign * eval_G(system, bj, x, 1)
            dfun = lambda x: sign * eval_G(system, bj, x, 2)
            root, _ = safeguarded_newton(fun, dfun, s[i], s[i + 1], tol=0.0, maxiter=200)
            out.append((float(root), "min" if a < 0 else "max"))
        i += 1
    return out


def _kind_at(d, i):
    left = d[i - 1] if i > 0 else None
    right = d[i + 1]
    if left is None:
        return None
    if left < 0 < right:
        return "min"
    if left > 0 > right:
        return "max"
    return None


def _derivative_table(system, bj, m, upto):
    return [float(eval_G(system, bj, m, j)) for j in range(1, upto + 1)]


def _refine_on_order(system, bj, m0, q, radius):
    """Newton on ``G^{(q)}`` near ``m0``, steps clipped to ``radius``."""
    m = float(m0)
    for _ in range(60):
        r = float(eval_G(system, bj, m, q))
        d = float(eval_G(system, bj, m, q + 1))
        if d == 0.0 or not math.isfinite(d):
            break
        step = max(-radius, min(radius, r / d))
        m_new = max(m0 - radius, min(m0 + radius, m - step))
        if m_new == m:
            break
        m = m_new
        if abs(step) <= 1e-16 * max(1.0, abs(m)):
            break
    return m


def classify_minimum(system: SystemDescriptor, bj: float, m0: float,
                     tolerances: Tolerances = Tolerances()):
    """Type ``2k`` and strength ``G^{(2k)}(m)`` of a minimum located near ``m0``.

    For each candidate ``k`` the location is refined as a simple root of
    ``G^{(2k-1)}`` (a flat minimum is only a multiple root of ``G'``, which can
    be located much less accurately), then accepted if all lower derivatives
    are below tolerance and ``G^{(2k)}`` is clearly positive.

    Returns ``(m, two_k, strength, table)``.
    """
    radius = 2.0 / (tolerances.grid - 1)
    tau = lambda j: tolerances.rel * _scale(bj, j)
    for k in range(1, tolerances.max_order // 2 + 1):
        q = 2 * k - 1
        m = _refine_on_order(system, bj, m0, q, radius)
        table = _derivative_table(system, bj, m, 2 * k)
        if all(abs(table[j - 1]) <= tau(j) for j in range(1, 2 * k)):
            top = table[2 * k - 1]
            if top > tau(2 * k):
                return m, 2 * k, top, table
            if top < -tau(2 * k):
                raise ClassificationError(f"stationary point near {m0} is not a minimum", table)
    table = _derivative_table(system, bj, m0, tolerances.max_order)
    for j, v in enumerate(table, start=1):
        if abs(v) > tau(j):
            if j % 2:
                raise ClassificationError(
                    f"first nonvanishing derivative at {m0} has odd order {j}", table)
            break
    raise ClassificationError(f"could not classify the stationary point near {m0}", table)


def find_and_classify_minima(system: SystemDescriptor, bj: float,
                             tolerances: Tolerances = Tolerances()) -> List[MinimumProfile]:
    """All local minima of ``G`` with their type, strength and global flag."""
    if bj <= 0:
        raise ValueError("beta*J must be positive")
    found = []
    for s0, kind in stationary_points(system, bj, tolerances):
        if kind != "min":
            continue
        m, two_k, lam, table = classify_minimum(system, bj, s0, tolerances)
        found.append((m, two_k, lam, table, float(eval_G(system, bj, m, 0))))
    if not found:
        raise NumericalError(f"no minimum of G found for beta*J={bj}")
    g = min(v for *_, v in found)
    band = tolerances.value * max(1.0, abs(g))
    profiles = []
    for m, two_k, lam, table, value in found:
        notes = []
        if lam < tolerances.near_degenerate * _scale(bj, two_k):
            notes.append(f"near-degenerate: strength {lam:.3g} is close to a change of type")
        # lower even orders were treated as zero but sit well above rounding
        for j in range(2, two_k, 2):
            v = table[j - 1]
            if abs(v) > 1e-4 * tolerances.rel * _scale(bj, j):
                notes.append(f"near-degenerate: G^({j})(m) = {v:.3g} is below the classification "
                             f"tolerance but not zero")
        if two_k == 2 and lam >= bj:
            notes.append("strength is not below beta*J; Gaussian variance would be nonpositive")
        profiles.append(MinimumProfile(m=m, two_k=two_k, strength=lam, is_global=value <= g + band,
                                       value=value, warnings=tuple(notes), derivatives=tuple(table)))
    return profiles


def global_minima(system, bj, tolerances: Tolerances = Tolerances()):
    return [p for p in find_and_classify_minima(system, bj, tolerances) if p.is_global]


def critical_beta(system: SystemDescriptor, J: float, bracket: Sequence[float] = (1e-3, 100.0),
                  tol: float = 1e-10) -> float:
    """Inverse temperature at which ``G''(0)`` changes sign on the symmetric branch."""
    if J <= 0:
        raise ValueError("J must be positive")
    drift = float(limit_cumulant(system, 0.0, 1))
    if abs(drift) > 1e-10:
        raise UnsupportedBranchError(
            f"mean field ∫(2f-1)dμ = {drift:.3g} is not zero; only the symmetric branch is supported")
    a = float(limit_cumulant(system, 0.0, 2))

    def curvature(beta):
        return float(eval_G(system, beta * J, 0.0, 2))

    lo, hi = map(float, bracket)
    if not (0 < lo < hi):
        raise BracketError(f"invalid bracket {bracket}")
    c_lo, c_hi = curvature(lo), curvature(hi)
    if c_lo * c_hi > 0:
        raise BracketError(f"G''(0) does not change sign on beta in [{lo}, {hi}]")
    sign = 1.0 if c_lo < 0 else -1.0
    root, ok = safeguarded_newton(lambda b: sign * curvature(float(b)),
                                  lambda b: sign * (J - 2.0 * float(b) * J * J * a),
                                  lo, hi, tol=tol * 1e-3)
    root = float(root)
    if abs(curvature(root)) > tol:
        raise NumericalError(f"critical beta not resolved: |G''(0)| = {abs(curvature(root)):.3g}")
    return root
