"""Synthetic dynamic graphs: topology generation, structural churn, and
ground-truth node dynamics.

A dataset is produced in three stages.  A static topology is generated from
one of five families (grid, random, power_law, small_world, community), a
piecewise-constant churn process perturbs its edge set at event times, and a
continuous-time node dynamic (heat diffusion or gene regulation) is integrated
over the evolving structure with a fixed-step RK4 whose step is refined by
halving until two successive refinements agree.  Observations are irregular
samples of both structure and state.

Everything here is deterministic given (parameters, seed) so that datasets
round-trip bit-exactly through their JSON serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import networkx as nx
import numpy as np

from .errors import NumericalError, ParameterError, RangeError

__all__ = [
    "Topology",
    "TimedAdjacency",
    "DynamicGraphObservations",
    "DynamicsParams",
    "ChurnParams",
    "TopologyTimeline",
    "StateSampler",
    "gen_topology",
    "evolve_topology",
    "simulate_heat",
    "simulate_gene",
    "sample_observations",
    "initial_states",
    "DatasetConfig",
    "build_dataset_components",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

TOPOLOGY_KINDS = ("grid", "random", "power_law", "small_world", "community")
DYNAMICS_KINDS = ("heat", "gene")

_MAX_HALVINGS = 24
_MAX_STEPS_PER_SEGMENT = 1 << 16


# ---- domain types ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Topology:
    """An undirected unweighted graph on a fixed node set.

    The adjacency matrix is symmetric with zero diagonal and {0, 1} entries,
    stored as float64 because every consumer does real arithmetic on it.
    """

    n_nodes: int
    adjacency: np.ndarray

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency, dtype=np.float64)
        object.__setattr__(self, "adjacency", adjacency)
        if self.n_nodes < 1:
            raise ParameterError(f"n_nodes must be positive, got {self.n_nodes}")
        if adjacency.shape != (self.n_nodes, self.n_nodes):
            raise ParameterError(
                f"adjacency shape {adjacency.shape} does not match n_nodes={self.n_nodes}")
        if not np.array_equal(adjacency, adjacency.T):
            raise ParameterError("adjacency must be symmetric")
        if np.any(np.diag(adjacency) != 0):
            raise ParameterError("adjacency must have zero diagonal")
        if not np.all((adjacency == 0) | (adjacency == 1)):
            raise ParameterError("adjacency entries must be 0 or 1")

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)


@dataclass(frozen=True, eq=False)
class TimedAdjacency:
    """A topology observed at one instant."""

    time: float
    topology: Topology

    def __post_init__(self):
        if not np.isfinite(self.time):
            raise ParameterError(f"snapshot time must be finite, got {self.time}")


@dataclass(eq=False)
class DynamicGraphObservations:
    """An ordered sequence of graph snapshots with optional node attributes.

    `node_states[k]` is the n x m attribute matrix observed alongside
    snapshot k.  `observed_channels`, when present, marks which adjacency
    entries were actually observed at each snapshot (False = missing); it is
    attached by channel masking and consumed by path construction.
    """

    snapshots: tuple
    node_states: Optional[tuple] = None
    observed_channels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.snapshots = tuple(self.snapshots)
        if len(self.snapshots) == 0:
            raise ParameterError("at least one snapshot required")
        times = [s.time for s in self.snapshots]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ParameterError("snapshot times must be strictly increasing")
        n = self.snapshots[0].topology.n_nodes
        if any(s.topology.n_nodes != n for s in self.snapshots):
            raise ParameterError("all snapshots must share one node set")
        if self.node_states is not None:
            self.node_states = tuple(
                np.asarray(x, dtype=np.float64).reshape(n, -1) for x in self.node_states)
            if len(self.node_states) != len(self.snapshots):
                raise ParameterError("node_states must align with snapshots")
        if self.observed_channels is not None:
            mask = np.asarray(self.observed_channels, dtype=bool)
            if mask.shape != (len(self.snapshots), n, n):
                raise ParameterError(
                    f"observed_channels shape {mask.shape} must be (N, n, n)")
            self.observed_channels = mask

    @property
    def n_nodes(self) -> int:
        return self.snapshots[0].topology.n_nodes

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots], dtype=np.float64)

    def adjacency_stack(self) -> np.ndarray:
        return np.stack([s.topology.adjacency for s in self.snapshots], axis=0)

    def states_stack(self) -> np.ndarray:
        if self.node_states is None:
            raise ParameterError("observations carry no node states")
        return np.stack(self.node_states, axis=0)

    def subset(self, indices: Sequence[int]) -> "DynamicGraphObservations":
        indices = list(indices)
        return DynamicGraphObservations(
            snapshots=tuple(self.snapshots[i] for i in indices),
            node_states=None if self.node_states is None
            else tuple(self.node_states[i] for i in indices),
            observed_channels=None if self.observed_channels is None
            else self.observed_channels[indices],
        )


@dataclass(frozen=True)
class DynamicsParams:
    """Parameters of the ground-truth node dynamics.

    kind "heat": diffusion with a single rate k shared by all edges.
    kind "gene": per-node degradation rate b with exponent f_exp and a
    saturating (Hill) interaction with exponent h_exp.
    """

    kind: str
    k: float = 1.0
    b: Optional[np.ndarray] = None
    f_exp: int = 1
    h_exp: float = 2.0

    def __post_init__(self):
        if self.kind not in DYNAMICS_KINDS:
            raise ParameterError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == "heat" and self.k <= 0:
            raise ParameterError(f"diffusion coefficient must be positive, got {self.k}")
        if self.kind == "gene":
            if self.b is not None:
                b = np.asarray(self.b, dtype=np.float64)
                if np.any(b <= 0):
                    raise ParameterError("degradation rates must be positive")
                object.__setattr__(self, "b", b)
            if self.f_exp not in (1, 2):
                raise ParameterError(f"f_exp must be 1 or 2, got {self.f_exp}")
            if self.h_exp < 1:
                raise ParameterError(f"h_exp must be >= 1, got {self.h_exp}")


@dataclass(frozen=True)
class ChurnParams:
    """Bernoulli per-edge drop/add applied at each event time."""

    drop_prob: float = 0.0
    add_prob: float = 0.0
    event_times: tuple = ()

    def __post_init__(self):
        for name, p in (("drop_prob", self.drop_prob), ("add_prob", self.add_prob)):
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"{name} must be in [0, 1], got {p}")
        times = tuple(float(t) for t in self.event_times)
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise ParameterError("event_times must be strictly increasing")
        if any(not np.isfinite(t) for t in times):
            raise ParameterError("event_times must be finite")
        object.__setattr__(self, "event_times", times)


class TopologyTimeline:
    """Piecewise-constant map from time to Topology.

    Segment i covers [boundaries[i], boundaries[i+1]) with the final segment
    extending to +inf; boundaries[0] is -inf so queries before the first
    event see the base topology.
    """

    def __init__(self, boundaries: Sequence[float], topologies: Sequence[Topology]):
        if len(topologies) != len(boundaries):
            raise ParameterError("one topology required per segment")
        self.boundaries = np.asarray(boundaries, dtype=np.float64)
        self.topologies = tuple(topologies)

    def at(self, t: float) -> Topology:
        idx = int(np.searchsorted(self.boundaries, t, side="right")) - 1
        return self.topologies[max(idx, 0)]

    def segments_in(self, start: float, end: float):
        """Yield (t0, t1, topology) covering [start, end] in order."""
        if end < start:
            raise ParameterError(f"empty interval [{start}, {end}]")
        cuts = [start]
        for b in self.boundaries:
            if start < b < end:
                cuts.append(float(b))
        cuts.append(end)
        for t0, t1 in zip(cuts, cuts[1:]):
            yield t0, t1, self.at(t0)


# ---- topology generation ----------------------------------------------


def _topology_from_graph(graph: nx.Graph, n: int) -> Topology:
    adjacency = nx.to_numpy_array(graph, nodelist=sorted(graph.nodes()), dtype=np.float64)
    adjacency = (adjacency > 0).astype(np.float64)
    np.fill_diagonal(adjacency, 0.0)
    return Topology(n_nodes=n, adjacency=adjacency)


def gen_topology(kind: str, n: int, params: Optional[dict] = None, seed: int = 0) -> Topology:
    """Generate a static topology from one of five families.

    Args:
        kind: one of "grid", "random", "power_law", "small_world", "community".
        n: node count (>= 2; a perfect square for "grid").
        params: family-specific knobs, with defaults:
            random: p (edge probability, default 0.1)
            power_law: m_attach (edges per arriving node, default 4)
            small_world: k_ring (ring neighbors, even, default 4),
                         rewire_prob (default 0.1)
            community: communities (default 4, must divide n),
                       p_in (default 0.3), p_out (default 0.01)
        seed: RNG seed; output is deterministic in (kind, n, params, seed).

    Returns:
        Topology with symmetric, zero-diagonal, binary adjacency.
    """
    params = dict(params or {})
    if kind not in TOPOLOGY_KINDS:
        raise ParameterError(f"unknown topology kind {kind!r}")
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")

    if kind == "grid":
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ParameterError(f"grid requires a perfect-square n, got {n}")
        graph = nx.grid_2d_graph(side, side)
        graph = nx.convert_node_labels_to_integers(graph, ordering="sorted")
        return _topology_from_graph(graph, n)

    if kind == "random":
        p = float(params.pop("p", 0.1))
        if not 0.0 < p <= 1.0:
            raise ParameterError(f"edge probability must be in (0, 1], got {p}")
        graph = nx.gnp_random_graph(n, p, seed=seed)
        return _topology_from_graph(graph, n)

    if kind == "power_law":
        m_attach = int(params.pop("m_attach", 4))
        if not 1 <= m_attach < n:
            raise ParameterError(
                f"attachment count must satisfy 1 <= m < n, got m={m_attach}, n={n}")
        graph = nx.barabasi_albert_graph(n, m_attach, seed=seed)
        return _topology_from_graph(graph, n)

    if kind == "small_world":
        k_ring = int(params.pop("k_ring", 4))
        rewire = float(params.pop("rewire_prob", 0.1))
        if not 0.0 <= rewire <= 1.0:
            raise ParameterError(f"rewiring probability must be in [0, 1], got {rewire}")
        if not 2 <= k_ring < n:
            raise ParameterError(f"ring degree must satisfy 2 <= k < n, got k={k_ring}")
        graph = nx.watts_strogatz_graph(n, k_ring, rewire, seed=seed)
        return _topology_from_graph(graph, n)

    # community
    communities = int(params.pop("communities", 4))
    p_in = float(params.pop("p_in", 0.3))
    p_out = float(params.pop("p_out", 0.01))
    if communities < 1 or n % communities != 0:
        raise ParameterError(
            f"community count must divide n, got {communities} communities for n={n}")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"{name} must be in [0, 1], got {p}")
    graph = nx.planted_partition_graph(communities, n // communities, p_in, p_out, seed=seed)
    return _topology_from_graph(graph, n)


def evolve_topology(base: Topology, churn: ChurnParams, seed: int = 0) -> TopologyTimeline:
    """Evolve a topology by Bernoulli edge drop/add at each churn event.

    At every event time each present edge is dropped with probability
    drop_prob and each absent node pair gains an edge with probability
    add_prob (one uniform draw per unordered pair per event, so the process
    is reproducible from the seed alone).  The result is piecewise constant:
    the base holds before the first event.
    """
    n = base.n_nodes
    rng = np.random.default_rng(seed)
    rows, cols = np.triu_indices(n, k=1)
    current = base.adjacency.copy()
    boundaries = [-np.inf]
    topologies = [base]
    for event_time in churn.event_times:
        draws = rng.random(rows.shape[0])
        present = current[rows, cols] == 1.0
        new_upper = np.where(present, draws >= churn.drop_prob, draws < churn.add_prob)
        adjacency = np.zeros((n, n), dtype=np.float64)
        adjacency[rows, cols] = new_upper
        adjacency += adjacency.T
        current = adjacency
        boundaries.append(float(event_time))
        topologies.append(Topology(n_nodes=n, adjacency=adjacency))
    return TopologyTimeline(boundaries, topologies)


# ---- dynamics simulation ----------------------------------------------


def _rk4_span(deriv: Callable, x0: np.ndarray, t0: float, t1: float, h: float,
              clamp_nonnegative: bool) -> np.ndarray:
    """Integrate dx/dt = deriv(x) over [t0, t1] with fixed step h.

    The final step is shortened to land on t1 exactly.  The derivative field
    is autonomous within a topology segment, so no time argument is threaded.
    """
    x = x0.copy()
    remaining = t1 - t0
    if remaining <= 0:
        return x
    n_full = int(np.floor(remaining / h + 1e-12))
    steps = [h] * n_full
    tail = remaining - n_full * h
    if tail > 1e-14 * max(abs(t1), 1.0):
        steps.append(tail)
    for step in steps:
        k1 = deriv(x)
        k2 = deriv(x + 0.5 * step * k1)
        k3 = deriv(x + 0.5 * step * k2)
        k4 = deriv(x + step * k3)
        x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if clamp_nonnegative:
            np.maximum(x, 0.0, out=x)
    return x


@dataclass
class _Segment:
    t_start: float
    t_end: float
    x_start: np.ndarray
    step: float
    deriv: Callable


class StateSampler:
    """Dense trajectory sampler over [0, horizon].

    Per topology segment the integration step was refined by halving until
    two successive refinements agreed below rtol; queries re-integrate from
    the segment start with that frozen step, so the value at a given t does
    not depend on what else was queried.
    """

    def __init__(self, segments, horizon: float, clamp_nonnegative: bool):
        self._segments = segments
        self.horizon = float(horizon)
        self._clamp = clamp_nonnegative

    def at(self, t: float) -> np.ndarray:
        if not 0.0 <= t <= self.horizon:
            raise RangeError(f"time {t} outside [0, {self.horizon}]")
        for seg in self._segments:
            if t <= seg.t_end or seg is self._segments[-1]:
                return _rk4_span(seg.deriv, seg.x_start, seg.t_start, t,
                                 seg.step, self._clamp)
        raise RangeError(f"time {t} not covered by any segment")

    def at_many(self, times: Sequence[float]) -> np.ndarray:
        return np.stack([self.at(float(t)) for t in times], axis=0)


def _refine_segments(timeline: TopologyTimeline, x0: np.ndarray,
                     make_deriv: Callable, horizon: float, rtol: float,
                     clamp_nonnegative: bool) -> StateSampler:
    if horizon <= 0:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    if rtol <= 0:
        raise ParameterError(f"rtol must be positive, got {rtol}")
    segments = []
    x = np.asarray(x0, dtype=np.float64).copy()
    for t0, t1, topology in timeline.segments_in(0.0, horizon):
        deriv = make_deriv(topology)
        length = t1 - t0
        h = length / 8.0
        x_coarse = _rk4_span(deriv, x, t0, t1, h, clamp_nonnegative)
        accepted = None
        last_diff = np.inf
        for _ in range(_MAX_HALVINGS):
            h_fine = h / 2.0
            if length / h_fine > _MAX_STEPS_PER_SEGMENT:
                break
            x_fine = _rk4_span(deriv, x, t0, t1, h_fine, clamp_nonnegative)
            both_finite = np.all(np.isfinite(x_coarse)) and np.all(np.isfinite(x_fine))
            last_diff = np.max(np.abs(x_fine - x_coarse)) if both_finite else np.inf
            if last_diff < rtol:
                accepted = (h_fine, x_fine)
                break
            h, x_coarse = h_fine, x_fine
        if accepted is None:
            raise NumericalError(
                f"step refinement did not converge on segment [{t0}, {t1}]: "
                f"last step {h:.3e}, last difference {last_diff:.3e}, "
                f"rtol {rtol:.3e}")
        step, x_end = accepted
        segments.append(_Segment(t0, t1, x, step, deriv))
        x = x_end
    return StateSampler(segments, horizon, clamp_nonnegative)


def simulate_heat(topology_map: TopologyTimeline, x0: np.ndarray, k: float,
                  horizon: float, rtol: float = 1e-8) -> StateSampler:
    """Diffusion dx_i/dt = -k * sum_j A_ij (x_i - x_j) over evolving structure.

    Within each constant-topology segment this is the linear system
    dx/dt = -k L x with L the graph Laplacian, so total state is conserved
    per segment (RK4 preserves linear invariants exactly).
    """
    if k <= 0:
        raise ParameterError(f"diffusion coefficient must be positive, got {k}")
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ParameterError("x0 must be finite")

    def make_deriv(topology: Topology):
        adjacency = topology.adjacency
        degrees = adjacency.sum(axis=1)

        def deriv(x):
            return -k * (degrees * x - adjacency @ x)

        return deriv

    return _refine_segments(topology_map, x0, make_deriv, horizon, rtol,
                            clamp_nonnegative=False)


def simulate_gene(topology_map: TopologyTimeline, x0: np.ndarray,
                  params: DynamicsParams, horizon: float,
                  rtol: float = 1e-8) -> StateSampler:
    """Regulatory dynamics dx_i/dt = -b_i x_i^f + sum_j A_ij x_j^h/(x_j^h+1).

    States are clamped at 0 from below after every integrator step; the Hill
    term is only physical on nonnegative states.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if np.any(x0 < 0):
        raise ParameterError("gene dynamics require nonnegative x0")
    if params.kind != "gene":
        raise ParameterError(f"expected gene params, got kind {params.kind!r}")
    n = x0.shape[0]
    b = np.ones(n) if params.b is None else np.broadcast_to(params.b, (n,)).copy()
    f_exp, h_exp = params.f_exp, params.h_exp

    def make_deriv(topology: Topology):
        adjacency = topology.adjacency

        def deriv(x):
            xs = np.maximum(x, 0.0)
            hill = xs ** h_exp
            return -b * xs ** f_exp + adjacency @ (hill / (hill + 1.0))

        return deriv

    return _refine_segments(topology_map, x0, make_deriv, horizon, rtol,
                            clamp_nonnegative=True)


def sample_observations(topology_map: TopologyTimeline, state_sampler: StateSampler,
                        times: Sequence[float]) -> DynamicGraphObservations:
    """Observe structure and state at the given strictly increasing times."""
    times = [float(t) for t in times]
    if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
        raise ParameterError("sample times must be strictly increasing")
    for t in times:
        if not 0.0 <= t <= state_sampler.horizon:
            raise RangeError(f"sample time {t} outside [0, {state_sampler.horizon}]")
    snapshots = []
    states = []
    for t in times:
        snapshots.append(TimedAdjacency(time=t, topology=topology_map.at(t)))
        states.append(state_sampler.at(t).reshape(-1, 1))
    return DynamicGraphObservations(snapshots=tuple(snapshots), node_states=tuple(states))


def initial_states(kind: str, n: int, seed: int, low: Optional[float] = None,
                   high: Optional[float] = None) -> np.ndarray:
    """Seeded uniform initial conditions; [0, 25] for heat, [0, 2] for gene."""
    if kind not in DYNAMICS_KINDS:
        raise ParameterError(f"unknown dynamics kind {kind!r}")
    defaults = {"heat": (0.0, 25.0), "gene": (0.0, 2.0)}
    lo, hi = defaults[kind]
    lo = lo if low is None else float(low)
    hi = hi if high is None else float(high)
    if hi <= lo:
        raise ParameterError(f"empty initial-state range [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=n)


# ---- end-to-end dataset assembly --------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to manufacture one dataset deterministically."""

    topology: str = "grid"
    n_nodes: int = 400
    topology_params: dict = field(default_factory=dict)
    dynamics: str = "heat"
    diffusion_k: float = 1.0
    gene_f_exp: int = 1
    gene_h_exp: float = 2.0
    horizon: float = 25.0
    n_snapshots: int = 120
    churn_events: int = 5
    drop_prob: float = 0.05
    add_prob: float = 0.001
    state_low: Optional[float] = None
    state_high: Optional[float] = None
    rtol: float = 1e-8

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "n_nodes": self.n_nodes,
            "topology_params": dict(self.topology_params),
            "dynamics": self.dynamics,
            "diffusion_k": self.diffusion_k,
            "gene_f_exp": self.gene_f_exp,
            "gene_h_exp": self.gene_h_exp,
            "horizon": self.horizon,
            "n_snapshots": self.n_snapshots,
            "churn_events": self.churn_events,
            "drop_prob": self.drop_prob,
            "add_prob": self.add_prob,
            "state_low": self.state_low,
            "state_high": self.state_high,
            "rtol": self.rtol,
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetConfig":
        return DatasetConfig(**d)


def build_dataset_components(cfg: DatasetConfig, seed: int):
    """Build (timeline, state sampler, sample times) for a dataset config.

    Sub-seeds are fixed offsets of the master seed so each stage draws from
    its own stream.  Churn events are evenly spaced inside (0, horizon);
    sample times are sorted uniform draws over [0, horizon].
    """
    base = gen_topology(cfg.topology, cfg.n_nodes, dict(cfg.topology_params), seed=seed)
    event_times = tuple(
        cfg.horizon * (i + 1) / (cfg.churn_events + 1) for i in range(cfg.churn_events))
    churn = ChurnParams(drop_prob=cfg.drop_prob, add_prob=cfg.add_prob,
                        event_times=event_times)
    timeline = evolve_topology(base, churn, seed=seed + 1)
    x0 = initial_states(cfg.dynamics, cfg.n_nodes, seed=seed + 2,
                        low=cfg.state_low, high=cfg.state_high)
    if cfg.dynamics == "heat":
        sampler = simulate_heat(timeline, x0, cfg.diffusion_k, cfg.horizon, cfg.rtol)
    else:
        params = DynamicsParams(kind="gene", f_exp=cfg.gene_f_exp, h_exp=cfg.gene_h_exp)
        sampler = simulate_gene(timeline, x0, params, cfg.horizon, cfg.rtol)
    rng = np.random.default_rng(seed + 3)
    times = np.sort(rng.uniform(0.0, cfg.horizon, size=cfg.n_snapshots))
    # Uniform draws collide with probability ~0; regenerate defensively if so.
    while np.any(np.diff(times) <= 0):
        times = np.sort(rng.uniform(0.0, cfg.horizon, size=cfg.n_snapshots))
    return timeline, sampler, times


def generate_dataset(cfg: DatasetConfig, seed: int) -> DynamicGraphObservations:
    timeline, sampler, times = build_dataset_components(cfg, seed)
    return sample_observations(timeline, sampler, times)


# ---- serialization -----------------------------------------------------


def save_dataset(obs: DynamicGraphObservations, generator_config: dict, seed: int,
                 path: str) -> None:
    """Write one dataset as a single JSON document.

    Matrices are stored dense and row-major; adjacency entries as integers,
    states as floats (JSON float repr round-trips IEEE doubles exactly).
    Key order and separators are fixed so identical inputs produce identical
    bytes.
    """
    n = obs.n_nodes
    document = {
        "n_nodes": n,
        "times": [float(t) for t in obs.times],
        "adjacency": [
            [int(v) for v in s.topology.adjacency.reshape(-1)] for s in obs.snapshots
        ],
        "states": None if obs.node_states is None else [
            [float(v) for v in x.reshape(-1)] for x in obs.node_states
        ],
        "generator_config": generator_config,
        "seed": int(seed),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(document, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_dataset(path: str):
    """Read a dataset document; returns (observations, generator_config, seed)."""
    with open(path, "r", encoding="utf-8") as fh:
        document = json.load(fh)
    n = int(document["n_nodes"])
    times = document["times"]
    snapshots = []
    for t, flat in zip(times, document["adjacency"]):
        adjacency = np.asarray(flat, dtype=np.float64).reshape(n, n)
        snapshots.append(TimedAdjacency(time=float(t), topology=Topology(n, adjacency)))
    states = None
    if document.get("states") is not None:
        states = tuple(np.asarray(flat, dtype=np.float64).reshape(n, -1)
                       for flat in document["states"])
    obs = DynamicGraphObservations(snapshots=tuple(snapshots), node_states=states)
    return obs, document.get("generator_config"), document.get("seed")
