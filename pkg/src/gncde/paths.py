"""Continuous paths through irregular graph snapshots.

A path carries 1 + n*n channels: channel 0 is the observation time itself and
the rest are the adjacency entries in row-major order, each interpolated
independently under one of four schemes:

    linear         piecewise-linear value, piecewise-constant derivative
    rectilinear    lead-lag: time advances while structure holds, then
                   structure advances while time holds, on an internal
                   coordinate [0, 2N]
    natural_cubic  C2 spline with zero second derivative at both ends
    cubic_hermite  cubic with prescribed knot slopes equal to the undivided
                   backward difference A(t_k) - A(t_{k-1})

Channels whose knot values never change are stored as constants, which is the
common case under sparse structural churn.  Channels may carry per-knot
observation masks; a masked channel interpolates across its gaps and holds
its first/last observed value toward the domain ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dyngraph import DynamicGraphObservations
from .errors import ParameterError, RangeError

__all__ = [
    "SCHEMES",
    "GraphPath",
    "PathDerivative",
    "ExtendedPath",
    "build_path",
    "build_channel_path",
    "mask_missing",
    "extend_path",
]

SCHEMES = ("linear", "rectilinear", "natural_cubic", "cubic_hermite")


@dataclass(frozen=True)
class PathDerivative:
    """dPath/ds split into its time channel and adjacency block."""

    d_time_channel: float
    d_adjacency: np.ndarray


def _natural_cubic_second_derivatives(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second derivatives of the natural cubic spline at the knots.

    Solves the standard tridiagonal system by a Thomas sweep, vectorized
    across the columns of y.  Two knots degenerate to a straight line.
    """
    m = t.shape[0]
    sigma = np.zeros_like(y)
    if m < 3:
        return sigma
    h = np.diff(t)
    # Interior equations i = 1..m-2:
    #   h[i-1]/6 s[i-1] + (h[i-1]+h[i])/3 s[i] + h[i]/6 s[i+1] = rhs[i]
    rhs = (y[2:] - y[1:-1]) / h[1:, None] - (y[1:-1] - y[:-2]) / h[:-1, None]
    lower = h[:-1] / 6.0
    diag = (h[:-1] + h[1:]) / 3.0
    upper = h[1:] / 6.0
    k = m - 2
    c_prime = np.zeros(k)
    d_prime = np.zeros((k, y.shape[1]))
    c_prime[0] = upper[0] / diag[0]
    d_prime[0] = rhs[0] / diag[0]
    for i in range(1, k):
        denom = diag[i] - lower[i] * c_prime[i - 1]
        c_prime[i] = upper[i] / denom
        d_prime[i] = (rhs[i] - lower[i] * d_prime[i - 1]) / denom
    sigma[k] = d_prime[k - 1]
    for i in range(k - 1, 0, -1):
        sigma[i] = d_prime[i - 1] - c_prime[i - 1] * sigma[i + 1]
    return sigma


class _ChannelGroup:
    """Channels sharing one knot subset, interpolated together."""

    def __init__(self, scheme: str, knot_t: np.ndarray, values: np.ndarray,
                 channel_idx: np.ndarray):
        if knot_t.shape[0] < 2:
            raise ParameterError("each channel needs at least 2 observed knots")
        if np.any(np.diff(knot_t) <= 0):
            raise ParameterError("duplicate or unordered knot times")
        self.scheme = scheme
        self.knot_t = knot_t
        self.values = values
        self.channel_idx = channel_idx
        if scheme == "natural_cubic":
            self.sigma = _natural_cubic_second_derivatives(knot_t, values)
        elif scheme == "cubic_hermite":
            slopes = np.empty_like(values)
            slopes[1:] = values[1:] - values[:-1]
            slopes[0] = values[1] - values[0]
            self.slopes = slopes

    def _segment(self, t: float) -> int:
        idx = int(np.searchsorted(self.knot_t, t, side="right")) - 1
        return min(max(idx, 0), self.knot_t.shape[0] - 2)

    def eval(self, t: float) -> np.ndarray:
        kt = self.knot_t
        if t <= kt[0]:
            return self.values[0]
        if t >= kt[-1]:
            return self.values[-1]
        pos = int(np.searchsorted(kt, t))
        if kt[pos] == t:
            return self.values[pos]
        i = self._segment(t)
        h = kt[i + 1] - kt[i]
        y0, y1 = self.values[i], self.values[i + 1]
        if self.scheme in ("linear", "rectilinear"):
            w = (t - kt[i]) / h
            return (1.0 - w) * y0 + w * y1
        if self.scheme == "natural_cubic":
            a = (kt[i + 1] - t) / h
            b = (t - kt[i]) / h
            s0, s1 = self.sigma[i], self.sigma[i + 1]
            return (a * y0 + b * y1
                    + ((a ** 3 - a) * s0 + (b ** 3 - b) * s1) * h * h / 6.0)
        u = (t - kt[i]) / h
        m0, m1 = self.slopes[i], self.slopes[i + 1]
        h00 = 2 * u ** 3 - 3 * u ** 2 + 1
        h10 = u ** 3 - 2 * u ** 2 + u
        h01 = -2 * u ** 3 + 3 * u ** 2
        h11 = u ** 3 - u ** 2
        return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1

    def derivative(self, t: float) -> np.ndarray:
        kt = self.knot_t
        if t < kt[0] or t > kt[-1]:
            # Held region of a masked channel: constant value.
            return np.zeros(self.values.shape[1])
        # One-sided rule at knots: right-hand segment, left-hand at the end.
        i = self._segment(t)
        h = kt[i + 1] - kt[i]
        y0, y1 = self.values[i], self.values[i + 1]
        if self.scheme in ("linear", "rectilinear"):
            return (y1 - y0) / h
        if self.scheme == "natural_cubic":
            a = (kt[i + 1] - t) / h
            b = (t - kt[i]) / h
            s0, s1 = self.sigma[i], self.sigma[i + 1]
            return ((y1 - y0) / h
                    - (3 * a ** 2 - 1) * s0 * h / 6.0
                    + (3 * b ** 2 - 1) * s1 * h / 6.0)
        u = (t - kt[i]) / h
        m0, m1 = self.slopes[i], self.slopes[i + 1]
        d00 = (6 * u ** 2 - 6 * u) / h
        d10 = 3 * u ** 2 - 4 * u + 1
        d01 = (-6 * u ** 2 + 6 * u) / h
        d11 = 3 * u ** 2 - 2 * u
        return d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1

    def second_derivative(self, t: float, side: str = "right") -> np.ndarray:
        """Analytic second derivative; `side` picks the segment at a knot."""
        kt = self.knot_t
        if t < kt[0] or t > kt[-1]:
            return np.zeros(self.values.shape[1])
        pos = int(np.searchsorted(kt, t))
        if pos < kt.shape[0] and kt[pos] == t and side == "left" and pos > 0:
            i = pos - 1
        else:
            i = self._segment(t)
        h = kt[i + 1] - kt[i]
        y0, y1 = self.values[i], self.values[i + 1]
        if self.scheme in ("linear", "rectilinear"):
            return np.zeros(self.values.shape[1])
        if self.scheme == "natural_cubic":
            a = (kt[i + 1] - t) / h
            b = (t - kt[i]) / h
            return a * self.sigma[i] + b * self.sigma[i + 1]
        u = (t - kt[i]) / h
        m0, m1 = self.slopes[i], self.slopes[i + 1]
        dd00 = (12 * u - 6) / (h * h)
        dd10 = (6 * u - 4) / h
        dd01 = (-12 * u + 6) / (h * h)
        dd11 = (6 * u - 2) / h
        return dd00 * y0 + dd10 * m0 + dd01 * y1 + dd11 * m1


class _MultiChannelInterpolant:
    """Shared interpolation core over a (knots x channels) value table."""

    def __init__(self, scheme: str, times: np.ndarray, table: np.ndarray,
                 observed: Optional[np.ndarray]):
        n_knots, n_channels = table.shape
        self.scheme = scheme
        self.times = times
        self.n_channels = n_channels
        self.domain = (float(times[0]), float(times[-1]))

        if observed is None:
            observed = np.ones(table.shape, dtype=bool)
        # Constant channels store a single value; the rest are grouped by
        # identical observation patterns so each group solves once.
        self.const_idx = []
        self.const_values = []
        grouped: dict = {}
        for c in range(n_channels):
            mask = observed[:, c]
            count = int(mask.sum())
            if count < 2:
                raise ParameterError(
                    f"channel {c} has {count} observed knots, needs >= 2")
            col = table[mask, c]
            if np.all(col == col[0]):
                self.const_idx.append(c)
                self.const_values.append(col[0])
                continue
            grouped.setdefault(mask.tobytes(), []).append(c)
        self.const_idx = np.asarray(self.const_idx, dtype=np.intp)
        self.const_values = np.asarray(self.const_values, dtype=np.float64)
        self.groups = []
        for key, channels in grouped.items():
            mask = np.frombuffer(key, dtype=bool)
            idx = np.asarray(channels, dtype=np.intp)
            self.groups.append(_ChannelGroup(
                scheme, times[mask], table[np.ix_(mask, idx)], idx))

    def _check_domain(self, t: float):
        lo, hi = self.domain
        if not lo <= t <= hi:
            raise RangeError(f"query {t} outside path domain [{lo}, {hi}]")

    def eval(self, t: float) -> np.ndarray:
        self._check_domain(t)
        out = np.empty(self.n_channels)
        if self.const_idx.size:
            out[self.const_idx] = self.const_values
        for group in self.groups:
            out[group.channel_idx] = group.eval(t)
        return out

    def derivative(self, t: float) -> np.ndarray:
        self._check_domain(t)
        out = np.zeros(self.n_channels)
        for group in self.groups:
            out[group.channel_idx] = group.derivative(t)
        return out

    def second_derivative(self, t: float, side: str = "right") -> np.ndarray:
        self._check_domain(t)
        out = np.zeros(self.n_channels)
        for group in self.groups:
            out[group.channel_idx] = group.second_derivative(t, side)
        return out


class GraphPath:
    """Continuous time-augmented adjacency path built from snapshots.

    `eval` and `eval_derivative` take the path's own coordinate: physical
    time for linear/cubic schemes, the internal lead-lag coordinate
    [0, 2N] for the rectilinear scheme.  `to_internal` maps physical times
    into that coordinate (identity for the other schemes).
    """

    def __init__(self, scheme: str, n_nodes: int, knot_times: np.ndarray,
                 core: _MultiChannelInterpolant, internal_knots: np.ndarray):
        self.scheme = scheme
        self.n_nodes = n_nodes
        self.knot_times = knot_times
        self.internal_knots = internal_knots
        self._core = core
        self.domain = core.domain

    def eval(self, t: float):
        row = self._core.eval(float(t))
        n = self.n_nodes
        return float(row[0]), row[1:].reshape(n, n)

    def eval_derivative(self, t: float) -> PathDerivative:
        row = self._core.derivative(float(t))
        n = self.n_nodes
        return PathDerivative(d_time_channel=float(row[0]),
                              d_adjacency=row[1:].reshape(n, n))

    def eval_second_derivative(self, t: float, side: str = "right"):
        row = self._core.second_derivative(float(t), side)
        n = self.n_nodes
        return float(row[0]), row[1:].reshape(n, n)

    def to_internal(self, t: float) -> float:
        """Map a physical time into the path's evaluation coordinate."""
        if self.scheme != "rectilinear":
            return float(t)
        kt = self.knot_times
        if t < kt[0]:
            raise RangeError(f"time {t} precedes the first knot {kt[0]}")
        if t >= kt[-1]:
            # Beyond the last knot, continue at the final lead-segment rate.
            rate = kt[-1] - kt[-2]
            return float(2 * (kt.shape[0] - 1) + (t - kt[-1]) / rate)
        k = int(np.searchsorted(kt, t, side="right")) - 1
        frac = (t - kt[k]) / (kt[k + 1] - kt[k])
        return float(2 * k + frac)


def _lead_lag_table(times: np.ndarray, table: np.ndarray,
                    observed: Optional[np.ndarray]):
    """Rewrite knots into the lead-lag internal coordinate.

    Internal knots are the integers 0..2N.  On [2k, 2k+1] time advances from
    t_k to t_{k+1} while every other channel holds; on [2k+1, 2k+2] the other
    channels advance to their next value while time holds.  A channel
    observed only on a subset of knots advances on the lag segment that ends
    at each observed knot and holds elsewhere.
    """
    n_knots, n_channels = table.shape
    big_n = n_knots - 1
    u = np.arange(2 * big_n + 1, dtype=np.float64)
    out = np.empty((2 * big_n + 1, n_channels))

    # Time channel: t_0, t_1, t_1, t_2, t_2, ...
    time_values = np.empty(2 * big_n + 1)
    time_values[0] = times[0]
    time_values[1::2] = times[1:]
    time_values[2::2] = times[1:]
    out[:, 0] = time_values

    if observed is None:
        observed = np.ones(table.shape, dtype=bool)
    for c in range(1, n_channels):
        obs_idx = np.nonzero(observed[:, c])[0]
        if obs_idx.size < 2:
            raise ParameterError(
                f"channel {c} has {obs_idx.size} observed knots, needs >= 2")
        col = np.empty(2 * big_n + 1)
        # Hold each observed value through its lead segments, then advance on
        # the lag segment [2s-1, 2s] that lands on the next observed knot.
        # With a value pinned at every integer coordinate, linear interpolation
        # on the internal grid reproduces the hold-then-ramp shape exactly.
        value = table[obs_idx[0], c]
        col[: 2 * obs_idx[0] + 1] = value
        prev = obs_idx[0]
        for s in obs_idx[1:]:
            col[2 * prev + 1: 2 * s] = value
            value = table[s, c]
            col[2 * s] = value
            prev = s
        col[2 * prev:] = value
        out[:, c] = col
    # Every internal knot carries a pinned value for every channel.
    return u, out, None


def build_path(obs: DynamicGraphObservations, scheme: str) -> GraphPath:
    """Interpolate observations into a continuous path.

    Args:
        obs: snapshots with strictly increasing times; if `observed_channels`
            is attached, unobserved adjacency entries are skipped as knots.
        scheme: one of SCHEMES.

    Returns:
        GraphPath exact at every (observed) knot.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown interpolation scheme {scheme!r}")
    times = obs.times
    n_knots = times.shape[0]
    if n_knots < 2:
        raise ParameterError("at least 2 snapshots required")
    if scheme == "natural_cubic" and n_knots < 3:
        raise ParameterError("natural_cubic requires at least 3 snapshots")
    if np.any(np.diff(times) <= 0):
        raise ParameterError("duplicate snapshot times")

    n = obs.n_nodes
    table = np.empty((n_knots, 1 + n * n))
    table[:, 0] = times
    table[:, 1:] = obs.adjacency_stack().reshape(n_knots, n * n)
    observed = None
    if obs.observed_channels is not None:
        observed = np.ones(table.shape, dtype=bool)
        observed[:, 1:] = obs.observed_channels.reshape(n_knots, n * n)

    if scheme == "rectilinear":
        u, lagged, _ = _lead_lag_table(times, table, observed)
        core = _MultiChannelInterpolant("rectilinear", u, lagged, None)
        internal = u
    else:
        core = _MultiChannelInterpolant(scheme, times, table, observed)
        internal = times
    return GraphPath(scheme, n, times, core, internal)


class ChannelPath:
    """A plain multichannel path (no adjacency structure), same schemes."""

    def __init__(self, scheme, times, core, internal_knots):
        self.scheme = scheme
        self.knot_times = times
        self.internal_knots = internal_knots
        self._core = core
        self.domain = core.domain

    def eval(self, t: float) -> np.ndarray:
        return self._core.eval(float(t))

    def eval_derivative(self, t: float) -> np.ndarray:
        return self._core.derivative(float(t))


def build_channel_path(times: np.ndarray, values: np.ndarray,
                       scheme: str = "natural_cubic") -> ChannelPath:
    """Interpolate an (N x C) value table over times; used for node features."""
    if scheme not in SCHEMES or scheme == "rectilinear":
        raise ParameterError(f"unsupported channel-path scheme {scheme!r}")
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != times.shape[0]:
        raise ParameterError("values must be (n_knots, n_channels)")
    core = _MultiChannelInterpolant(scheme, times, values, None)
    return ChannelPath(scheme, times, core, times)


def mask_missing(obs: DynamicGraphObservations,
                 missing_mask: np.ndarray) -> DynamicGraphObservations:
    """Mark adjacency entries as unobserved; path builds then skip them.

    Args:
        obs: source observations.
        missing_mask: (N, n, n) booleans, True where the channel is MISSING
            at that snapshot.  The time channel is always observed.

    Returns:
        Observations carrying the per-channel knot subsets.
    """
    n, big_n = obs.n_nodes, len(obs.snapshots)
    missing = np.asarray(missing_mask, dtype=bool)
    if missing.shape != (big_n, n, n):
        raise ParameterError(
            f"missing_mask shape {missing.shape} must be ({big_n}, {n}, {n})")
    observed = ~missing
    if obs.observed_channels is not None:
        observed = observed & obs.observed_channels
    counts = observed.reshape(big_n, -1).sum(axis=0)
    short = np.nonzero(counts < 2)[0]
    if short.size:
        raise ParameterError(
            f"{short.size} channels retain < 2 observed knots (first: channel {short[0]})")
    return DynamicGraphObservations(snapshots=obs.snapshots,
                                    node_states=obs.node_states,
                                    observed_channels=observed)


# ---- extrapolation beyond the final knot -------------------------------


EXTRAPOLATION_MODES = ("hold", "last_slope")


class ExtendedPath:
    """A path extended past its final knot for extrapolation queries.

    hold: terminal value, zero derivative.
    last_slope: value continues linearly at the terminal derivative; for the
    rectilinear scheme the time channel continues at the final lead-segment
    rate while adjacency holds (the terminal lag segment has zero time
    derivative, which would freeze time).
    """

    def __init__(self, path: GraphPath, mode: str = "hold"):
        if mode not in EXTRAPOLATION_MODES:
            raise ParameterError(f"unknown extrapolation mode {mode!r}")
        self.path = path
        self.mode = mode
        self.scheme = path.scheme
        self.n_nodes = path.n_nodes
        self.knot_times = path.knot_times
        self.internal_knots = path.internal_knots
        self.domain = path.domain
        self._t_end = path.domain[1]
        self._terminal_value = path.eval(self._t_end)
        if mode == "last_slope":
            if path.scheme == "rectilinear":
                rate = path.knot_times[-1] - path.knot_times[-2]
                self._terminal_slope = PathDerivative(
                    d_time_channel=float(rate),
                    d_adjacency=np.zeros((path.n_nodes, path.n_nodes)))
            else:
                self._terminal_slope = path.eval_derivative(self._t_end)
        else:
            self._terminal_slope = PathDerivative(
                d_time_channel=0.0,
                d_adjacency=np.zeros((path.n_nodes, path.n_nodes)))

    def eval(self, t: float):
        if t <= self._t_end:
            return self.path.eval(t)
        dt = t - self._t_end
        time_value, adjacency = self._terminal_value
        slope = self._terminal_slope
        return (time_value + slope.d_time_channel * dt,
                adjacency + slope.d_adjacency * dt)

    def eval_derivative(self, t: float) -> PathDerivative:
        if t <= self._t_end:
            return self.path.eval_derivative(t)
        return self._terminal_slope

    def to_internal(self, t: float) -> float:
        return self.path.to_internal(t)


def extend_path(path: GraphPath, mode: str = "hold") -> ExtendedPath:
    return ExtendedPath(path, mode)
