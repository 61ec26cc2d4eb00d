"""Fixed-step and adaptive integration of embedding trajectories.

The integrators treat the field as a black-box callable f(t, z) and work
identically on plain arrays and on recorded variables, so one forward
pass serves both inference and tape-based training.  Fixed-step methods
insert every path knot and every query time as a mandatory step boundary;
the adaptive method additionally controls its step by a mixed
absolute/relative error norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .autodiff import value_of
from .errors import DivergenceError, ParameterError, StepBudgetError

METHODS = ("euler", "rk4", "dopri5")

# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"
    step: float = None
    rtol: float = 1e-6
    atol: float = 1e-8
    max_steps: int = 1 << 20

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError("unknown method %r" % (self.method,))
        if self.step is not None and not self.step > 0:
            raise ParameterError("step must be positive")
        if not (self.rtol > 0 and self.atol > 0):
            raise ParameterError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be at least 1")


@dataclass
class EmbeddingTrajectory:
    query_times: tuple
    states: list
    stats: dict = dc_field(default_factory=dict)


def _check_finite(z, t):
    v = value_of(z)
    if not np.all(np.isfinite(v)):
        raise DivergenceError("non-finite state during integration", time=t)


def _boundaries(t0, t_end, step, knots, query_times):
    """Step grid plus mandatory knot and query boundaries, deduplicated."""
    span = t_end - t0
    if span <= 0:
        return np.array([t0])
    n_whole = int(np.ceil(span / step - 1e-12))
    grid = t0 + step * np.arange(n_whole + 1)
    grid[-1] = t_end
    extras = [np.asarray(query_times, dtype=float)]
    if knots is not None:
        k = np.asarray(knots, dtype=float)
        extras.append(k[(k > t0) & (k < t_end)])
    points = np.concatenate([grid] + extras)
    points = np.unique(points)
    points = points[(points >= t0) & (points <= t_end)]
    # Merge boundaries closer than float resolution allows a step to be.
    keep = [points[0]]
    tol = max(span, 1.0) * 1e-13
    for p in points[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    keep[-1] = t_end
    return np.array(keep)


# Steps land exactly on path knots, where one-sided derivative rules make
# the endpoint stages see the neighboring segment's slope.  Sampling the
# endpoint stages a hair inside the step keeps every evaluation on the
# segment the step actually crosses; the shift is far below solver error.
_EDGE_NUDGE = 1e-9


def _euler_step(field, t, z, h):
    return z + field(t + _EDGE_NUDGE * h, z) * h


def _rk4_step(field, t, z, h):
    d = _EDGE_NUDGE * h
    k1 = field(t + d, z)
    k2 = field(t + h / 2, z + k1 * (h / 2))
    k3 = field(t + h / 2, z + k2 * (h / 2))
    k4 = field(t + h - d, z + k3 * h)
    return z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)


def integrate(field, path, z0, t0, query_times, cfg):
    """Integrate dz/ds = field(s, z) from t0 through sorted query times.

    path supplies mandatory knot boundaries (pass None for free-running
    test problems).  Returns an EmbeddingTrajectory whose states align
    with query_times; states are Vars when z0 or the field output is
    recorded, plain arrays otherwise.
    """
    queries = [float(t) for t in query_times]
    if len(queries) == 0:
        raise ParameterError("query_times must be nonempty")
    if any(b < a for a, b in zip(queries, queries[1:])):
        raise ParameterError("query_times must be sorted ascending")
    if queries[0] < t0 - 1e-12:
        raise ParameterError("query times must not precede t0")
    _check_finite(z0, t0)

    if cfg.method == "dopri5":
        return _integrate_adaptive(field, path, z0, t0, queries, cfg)
    return _integrate_fixed(field, path, z0, t0, queries, cfg)


def _integrate_fixed(field, path, z0, t0, queries, cfg):
    t_end = queries[-1]
    step = cfg.step
    if step is None:
        step = max((t_end - t0) / 400.0, 1e-12)
    knots = path.internal_knots if path is not None else None
    bounds = _boundaries(t0, t_end, step, knots, queries)
    n_steps = len(bounds) - 1
    if n_steps > cfg.max_steps:
        raise StepBudgetError("fixed grid needs %d steps, budget is %d"
                              % (n_steps, cfg.max_steps))

    stepper = _euler_step if cfg.method == "euler" else _rk4_step
    evals_per_step = 1 if cfg.method == "euler" else 4
    states = []
    stats = {"steps_taken": 0, "rejected_steps": 0, "field_evals": 0}

    # Query positions inside the boundary array (boundaries include them).
    qi = 0
    z = z0
    t = bounds[0]
    if abs(queries[0] - t0) <= 1e-12:
        while qi < len(queries) and abs(queries[qi] - t0) <= 1e-12:
            states.append(z)
            qi += 1
    for b in range(n_steps):
        h = bounds[b + 1] - bounds[b]
        z = stepper(field, bounds[b], z, h)
        t = bounds[b + 1]
        stats["steps_taken"] += 1
        stats["field_evals"] += evals_per_step
        _check_finite(z, t)
        while qi < len(queries) and queries[qi] <= t + 1e-12:
            states.append(z)
            qi += 1
    while qi < len(queries):
        states.append(z)
        qi += 1
    return EmbeddingTrajectory(query_times=tuple(queries), states=states,
                               stats=stats)


def _error_norm(err, z_new, z_old, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(value_of(z_new)),
                                     np.abs(value_of(z_old)))
    ratio = value_of(err) / scale
    return float(np.sqrt(np.mean(np.square(ratio))))


def _integrate_adaptive(field, path, z0, t0, queries, cfg):
    t_end = queries[-1]
    knots = path.internal_knots if path is not None else None
    mandatory = _boundaries(t0, t_end, max(t_end - t0, 1e-12), knots, queries)

    states = []
    stats = {"steps_taken": 0, "rejected_steps": 0, "field_evals": 0}
    qi = 0
    z = z0
    while qi < len(queries) and abs(queries[qi] - t0) <= 1e-12:
        states.append(z)
        qi += 1

    h = (t_end - t0) / 100.0 if t_end > t0 else 0.0
    for seg in range(len(mandatory) - 1):
        t = mandatory[seg]
        seg_end = mandatory[seg + 1]
        h = min(h if h > 0 else (seg_end - t), seg_end - t)
        while t < seg_end - 1e-12:
            h = min(h, seg_end - t)
            if stats["steps_taken"] + stats["rejected_steps"] >= cfg.max_steps:
                raise StepBudgetError(
                    "adaptive solver exceeded max_steps=%d near t=%.6g"
                    % (cfg.max_steps, t))
            ks = []
            for i in range(7):
                ti = t + _DP_C[i] * h
                if _DP_C[i] == 0.0:
                    ti = t + _EDGE_NUDGE * h
                elif _DP_C[i] == 1.0:
                    ti = t + h - _EDGE_NUDGE * h
                zi = z
                for j, a in enumerate(_DP_A[i]):
                    if a != 0.0:
                        zi = zi + ks[j] * (a * h)
                ks.append(field(ti, zi))
            stats["field_evals"] += 7
            z5 = z
            for i in range(7):
                if _DP_B5[i] != 0.0:
                    z5 = z5 + ks[i] * (_DP_B5[i] * h)
            err = np.zeros_like(value_of(z))
            for i in range(7):
                coeff = _DP_B5[i] - _DP_B4[i]
                if coeff != 0.0:
                    err = err + value_of(ks[i]) * (coeff * h)
            norm = _error_norm(err, z5, z, cfg.atol, cfg.rtol)
            if norm <= 1.0:
                t = t + h
                z = z5
                stats["steps_taken"] += 1
                _check_finite(z, t)
            else:
                stats["rejected_steps"] += 1
            factor = 0.9 * (norm + 1e-16) ** -0.2
            h = h * min(5.0, max(0.2, factor))
        while qi < len(queries) and queries[qi] <= seg_end + 1e-12:
            states.append(z)
            qi += 1
    while qi < len(queries):
        states.append(z)
        qi += 1
    return EmbeddingTrajectory(query_times=tuple(queries), states=states,
                               stats=stats)


def order_check(method, field, z0, t0, t_end, exact, base_step, halvings=4):
    """Measured convergence order as a log-log slope over step halvings.

    exact is the true solution at t_end.  Returns None when the problem
    is degenerate for order measurement (errors at rounding level).
    """
    errors = []
    steps = []
    for k in range(halvings):
        h = base_step / (2 ** k)
        cfg = SolverConfig(method=method, step=h, max_steps=1 << 24)
        out = integrate(field, None, z0, t0, [t_end], cfg)
        err = float(np.max(np.abs(value_of(out.states[-1]) - exact)))
        errors.append(err)
        steps.append(h)
    if max(errors) < 1e-14:
        return None
    logs = np.log(np.maximum(errors, 1e-300))
    slope, _ = np.polyfit(np.log(steps), logs, 1)
    return float(slope)
