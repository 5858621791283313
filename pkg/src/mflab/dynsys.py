"""Measure-preserving dynamical systems that generate the external field.

A system bundles a state space, an invariant probability measure, a map ``T``
and a field function ``f`` with values in ``[0, 1]``. Two concrete families are
shipped (irrational rotations of the circle and the degenerate constant field);
anything else goes through :func:`user_map`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from ._numerics import QuadratureError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

KINDS = ("torus-rotation", "constant-field", "user-supplied-map")
INTEGRATORS = ("closed-form", "quadrature", "orbit-average")

DEFAULT_NODES = 201
NODE_CAP = 100_000
_GK_NODES = 21


class RationalRotationWarning(UserWarning):
    """The rotation angle is (numerically) rational; the rotation is not uniquely ergodic."""


@dataclass(frozen=True)
class SystemDescriptor:
    kind: str
    field: Callable = dc_field(compare=False)
    field_name: str = "identity"
    alpha: Optional[float] = None
    value: Optional[float] = None  # constant-field level
    transform: Optional[Callable] = dc_field(default=None, compare=False)
    integrator: str = "closed-form"
    nodes: int = DEFAULT_NODES
    rational: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator policy {self.integrator!r}")
        if self.nodes < 1:
            raise ValueError("quadrature node count must be positive")
        if self.kind == "torus-rotation" and not (0.0 < self.alpha < 1.0):
            raise ValueError("rotation angle must lie in (0, 1)")

    @property
    def is_torus_identity(self) -> bool:
        """True for the rotation with ``f(y) = y``, which has closed-form integrals."""
        return self.kind == "torus-rotation" and self.field_name == "identity"

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant-field"

    def map(self, x):
        """Apply ``T`` once."""
        if self.kind == "torus-rotation":
            y = np.asarray(x, dtype=float) + self.alpha
            return y - np.floor(y)
        if self.kind == "constant-field":
            return x
        return self.transform(x)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "field": self.field_name, "integrator": self.integrator,
             "nodes": self.nodes}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.rational:
            d["rational"] = True
        return d


@dataclass(frozen=True)
class FieldTrajectory:
    """Field values ``p_i = f(T^i x0)`` for ``i = 1..n``."""

    x0: float
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("trajectory must be a nonempty 1-d sequence")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("field values must lie in [0, 1]")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return int(self.p.size)

    def __len__(self):
        return self.n

    @classmethod
    def from_values(cls, p: Sequence[float], x0: float = float("nan")) -> "FieldTrajectory":
        return cls(x0=x0, p=np.asarray(p, dtype=float))


# -- field functions ---------------------------------------------------------

def _identity(y):
    return np.asarray(y, dtype=float)


def _constant(c):
    def f(y):
        return np.full(np.shape(y), c, dtype=float)
    return f


_EXPR_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
                 "arctan", "pi", "floor", "minimum", "maximum")
}


def logistic_of(g: Callable) -> Callable:
    """Field ``e^g / (1 + e^g)``: turns an arbitrary real field ``g`` into one in [0, 1]."""
    def f(y):
        from scipy.special import expit
        return expit(np.asarray(g(y), dtype=float))
    return f


def compile_expression(expr: str) -> Callable:
    """Turn a numpy expression in ``x`` (e.g. ``"2*cos(2*pi*x)"``) into a vectorized callable."""
    code = compile(expr, "<field>", "eval")
    for name in code.co_names:
        if name != "x" and name not in _EXPR_NAMESPACE:
            raise ValueError(f"name {name!r} not allowed in field expression {expr!r}")

    def g(x):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NAMESPACE, x=np.asarray(x, dtype=float)))
    return g


def parse_field(spec: str):
    """Parse ``"identity"``, ``"constant:<p>"`` or ``"logistic-of:<expr>"``.

    Returns ``(callable, constant-or-None)``.
    """
    spec = spec.strip()
    if spec == "identity":
        return _identity, None
    if spec.startswith("constant:"):
        c = float(spec.split(":", 1)[1])
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"constant field {c} outside [0, 1]")
        return _constant(c), c
    if spec.startswith("logistic-of:"):
        return logistic_of(compile_expression(spec.split(":", 1)[1])), None
    raise ValueError(f"unrecognised field specification {spec!r}")


# -- constructors ------------------------------------------------------------

def _looks_rational(a: float, max_den: int = 10_000) -> bool:
    q = Fraction(a).limit_denominator(max_den)
    return abs(float(q) - a) < 1e-12


def torus_rotation(alpha: float = GOLDEN, field: str = "identity", integrator="closed-form",
                   nodes: int = DEFAULT_NODES) -> SystemDescriptor:
    """Rotation ``x -> x + alpha mod 1`` on [0, 1) with Lebesgue measure."""
    alpha = float(alpha)
    f, _ = parse_field(field)
    rational = 0.0 < alpha < 1.0 and _looks_rational(alpha)
    if rational:
        warnings.warn(f"rotation angle {alpha} is rational; the rotation is not uniquely ergodic",
                      RationalRotationWarning, stacklevel=2)
    return SystemDescriptor(kind="torus-rotation", field=f, field_name=field, alpha=alpha,
                            integrator=integrator, nodes=nodes, rational=rational)


def constant_field(p: float, integrator="closed-form") -> SystemDescriptor:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"constant field {p} outside [0, 1]")
    return SystemDescriptor(kind="constant-field", field=_constant(p), field_name=f"constant:{p!r}",
                            value=p, integrator=integrator)


def user_map(transform: Callable, field: Callable, *, name: str = "user",
             integrator: str = "quadrature", nodes: int = DEFAULT_NODES) -> SystemDescriptor:
    """Wrap a user map on [0, 1).

    With ``integrator="quadrature"`` the invariant measure is taken to be
    Lebesgue measure on [0, 1); use ``"orbit-average"`` otherwise.
    """
    if integrator == "closed-form":
        integrator = "quadrature"
    return SystemDescriptor(kind="user-supplied-map", field=field, field_name=name,
                            transform=transform, integrator=integrator, nodes=nodes)


def from_config(kind: str, alpha=None, field: str = "identity", integrator="closed-form",
                nodes: int = DEFAULT_NODES) -> SystemDescriptor:
    if kind == "torus-rotation":
        return torus_rotation(GOLDEN if alpha is None else alpha, field, integrator, nodes)
    if kind == "constant-field":
        _, c = parse_field(field)
        if c is None:
            raise ValueError("constant-field systems need field = constant:<p>")
        return constant_field(c, integrator)
    raise ValueError(f"system kind {kind!r} cannot be built from a configuration record")


# -- operations --------------------------------------------------------------

def orbit_points(system: SystemDescriptor, x0: float, n: int, method: str = "direct") -> np.ndarray:
    """The points ``T^i x0`` for ``i = 1..n``.

    For rotations ``method="direct"`` evaluates ``frac(x0 + i*alpha)``;
    ``method="iterate"`` applies the map repeatedly, subtracting the floor at
    every step.
    """
    n = int(n)
    if n < 1:
        raise ValueError("orbit length must be at least 1")
    if system.kind == "torus-rotation":
        x0 = float(x0)
        if not 0.0 <= x0 < 1.0:
            raise ValueError(f"start point {x0} outside [0, 1)")
        if method == "direct":
            y = x0 + np.arange(1, n + 1, dtype=float) * system.alpha
            y -= np.floor(y)
        elif method == "iterate":
            y = np.empty(n)
            x = x0
            for i in range(n):
                x += system.alpha
                x -= math.floor(x)
                y[i] = x
        else:
            raise ValueError(f"unknown orbit method {method!r}")
        # frac() can round up to 1.0 for inputs just below an integer
        y[y >= 1.0] = 0.0
        return y
    if system.kind == "constant-field":
        # single-point state space {p}
        return np.full(n, system.value, dtype=float)
    pts = np.empty(n)
    x = x0
    for i in range(n):
        x = system.transform(x)
        pts[i] = x
    return pts


def orbit(system: SystemDescriptor, x0: float, n: int, method: str = "direct") -> FieldTrajectory:
    """Field trajectory ``p_i = f(T^i x0)``, ``i = 1..n``."""
    if system.kind == "constant-field":
        if int(n) < 1:
            raise ValueError("orbit length must be at least 1")
        return FieldTrajectory(x0=x0, p=np.full(int(n), system.value))
    pts = orbit_points(system, x0, n, method)
    return FieldTrajectory(x0=x0, p=np.asarray(system.field(pts), dtype=float))


def invariant_integral(system: SystemDescriptor, h: Callable, tol: float = 1e-12):
    """``∫ h dμ`` for the system's invariant measure.

    ``h`` maps points of shape ``S`` to values of shape ``S + P``; a nonempty
    trailing shape ``P`` is integrated componentwise, which lets a whole
    parameter grid share one quadrature.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if system.kind == "constant-field":
        return _as_result(h(np.float64(system.value)))
    if system.integrator == "orbit-average":
        pts = orbit_points(system, 0.0 if system.kind == "torus-rotation" else 0.5, system.nodes)
        vals = np.asarray(h(pts), dtype=float)
        return _as_result(_shifted_mean(vals))
    return _quadrature(h, tol, system.nodes)


def _shifted_mean(vals):
    # adding back the first value keeps a constant integrand exact
    ref = vals[0]
    return ref + np.mean(vals - ref, axis=0)


def _as_result(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def _quadrature(h, tol, nodes):
    panels = max(1, round(nodes / _GK_NODES))
    limit = max(panels, NODE_CAP // _GK_NODES)
    ref = np.asarray(h(0.5), dtype=float)
    scalar = ref.ndim == 0

    def g(y):
        return np.asarray(h(y), dtype=float) - ref

    breaks = np.linspace(0.0, 1.0, panels + 1)[1:-1]
    res, err, info = integrate.quad_vec(g, 0.0, 1.0, epsabs=tol, epsrel=0.0, norm="max",
                                        limit=limit, points=breaks if breaks.size else None,
                                        full_output=True)
    # the interval budget may run out after the estimate already meets tol
    if not (info.success or err <= tol):
        raise QuadratureError(
            f"quadrature did not reach tolerance {tol:g} within {limit * _GK_NODES} nodes "
            f"(achieved error estimate {err:.3g})", estimate=float(err))
    out = ref + res
    return float(out) if scalar else np.asarray(out)


def birkhoff_deviation_exponent(system: SystemDescriptor, h: Callable, x0: float,
                                n_grid: Sequence[int], floor: float = 1e-12) -> dict:
    """Growth exponent of centred Birkhoff sums along one orbit.

    ``D_n = |sum_{k<=n} (h(T^k x0) - ∫h dμ)|`` is evaluated on ``n_grid``. The
    exponent is the least-squares slope of ``log`` of the running maximum
    ``max_{k<=n} D_k`` against ``log n``; the envelope obeys the same ``o(n^a)``
    bounds as ``D_n`` but does not dip when the sum happens to pass near zero,
    so the fitted slope is stable. Values below ``floor`` are clamped before
    taking logs; an identically vanishing sequence reports exponent 0.
    """
    grid = np.asarray(n_grid, dtype=int)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 1:
        raise ValueError("n_grid must be a nonempty increasing sequence of positive integers")
    mean = invariant_integral(system, h)
    pts = orbit_points(system, x0, int(grid[-1]))
    centred = np.asarray(h(pts), dtype=float) - mean
    sums = np.abs(np.cumsum(centred))
    dev = sums[grid - 1]
    env = np.maximum.accumulate(sums)[grid - 1]
    if grid.size < 2 or np.all(env <= floor):
        slope = 0.0
    else:
        slope = float(np.polyfit(np.log(grid), np.log(np.maximum(env, floor)), 1)[0])
    return {"n_grid": grid.tolist(), "deviations": dev.tolist(), "envelope": env.tolist(),
            "fitted_exponent": slope}
