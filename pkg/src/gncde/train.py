"""Training loop: tape gradients, Adam, and the attribute-forecast protocol.

Gradients come from reverse-mode differentiation of the discretized solve
(the tape records the exact discrete program the solver ran), so they are
exact for the chosen step grid rather than approximations of the
continuous adjoint.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from .autodiff import (
    Var,
    absolute,
    exp,
    log,
    log_softmax_rows,
    mean_all,
    relu,
    square,
    stack,
    sum_all,
    value_of,
)
from .dyngraph import DynamicGraphObservations
from .errors import DivergenceError, ParameterError
from .paths import build_path, extend_path, mask_missing
from .solver import SolverConfig, integrate
from .vfield import (
    decode,
    evaluate_field,
    field_gnode,
    field_neural_cde_plain,
    init_embedding,
    init_params,
    normalize_adjacency,
    plain_path_derivative,
)


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 20
    clip_norm: float = 10.0
    loss: str = "mse"
    embed_dim: int = 20
    n_layers: int = 1
    activation: str = "relu"
    direct_cap: int = 20
    hidden_dim: int = 64
    solver_method: str = "rk4"
    solver_step: float = None
    rtol: float = 1e-6
    atol: float = 1e-8
    max_steps: int = 1 << 20
    extrapolation_mode: str = "last_slope"
    train_count: int = None
    interp_count: int = None
    extrap_count: int = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ParameterError("iterations must be nonnegative")
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        if self.eval_every < 1:
            raise ParameterError("eval_every must be at least 1")
        if self.clip_norm < 0:
            raise ParameterError("clip_norm must be nonnegative (0 disables)")
        if self.loss not in ("mse", "l1"):
            raise ParameterError("loss must be 'mse' or 'l1'")

    def solver_config(self):
        return SolverConfig(method=self.solver_method, step=self.solver_step,
                            rtol=self.rtol, atol=self.atol,
                            max_steps=self.max_steps)


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    step_count: int
    first_moment: dict
    second_moment: dict


@dataclass
class TrainReport:
    variant: str
    scheme: str
    seed: int
    train_losses: list
    evals: list
    wall_seconds: list
    total_seconds: float
    diverged: bool
    divergence_message: str
    final_params: object
    config: TrainConfig

    def deterministic_dict(self):
        """Everything reproducible bit-for-bit given (dataset, config, seed).

        Wall-clock numbers live in timing_dict; keeping them out of this
        payload is what lets identical runs serialize identically.
        """
        cfg = asdict(self.config)
        return {
            "variant": self.variant,
            "scheme": self.scheme,
            "seed": self.seed,
            "config": cfg,
            "iterations_run": len(self.train_losses),
            "train_losses": [float(x) for x in self.train_losses],
            "evals": self.evals,
            "diverged": self.diverged,
            "divergence_message": self.divergence_message,
        }

    def timing_dict(self):
        return {
            "per_iteration_seconds": [float(x) for x in self.wall_seconds],
            "total_seconds": float(self.total_seconds),
        }


# ---- losses ------------------------------------------------------------


def _check_match(pred, target):
    p_shape = np.shape(value_of(pred))
    t_shape = np.shape(np.asarray(target))
    if p_shape != t_shape:
        raise ParameterError("prediction shape %s does not match target %s"
                             % (p_shape, t_shape))


def loss_l1(pred, target):
    """Mean absolute deviation over all entries and query times."""
    _check_match(pred, target)
    return mean_all(absolute(pred - np.asarray(target, dtype=float)))


def loss_mse(pred, target):
    """Mean squared error; the training objective."""
    _check_match(pred, target)
    return mean_all(square(pred - np.asarray(target, dtype=float)))


def loss_cross_entropy(logits, labels):
    """Mean cross-entropy of row logits against integer class labels."""
    rows = log_softmax_rows(logits)
    values = value_of(rows)
    idx = np.asarray(labels, dtype=int).reshape(-1)
    if idx.shape[0] != values.shape[0]:
        raise ParameterError("labels length %d does not match %d logit rows"
                             % (idx.shape[0], values.shape[0]))
    one_hot = np.zeros_like(values)
    one_hot[np.arange(idx.shape[0]), idx] = 1.0
    return sum_all(rows * one_hot) * (-1.0 / idx.shape[0])


def loss_bce_logits(logits, targets):
    """Mean binary cross-entropy from logits, stable for large scores."""
    t = np.asarray(targets, dtype=float).reshape(np.shape(value_of(logits)))
    softplus = log(exp(absolute(logits) * -1.0) + 1.0)
    return mean_all(relu(logits) - logits * t + softplus)


# ---- gradients ---------------------------------------------------------


def grad(loss_closure, params):
    """Evaluate the closure on recorded weights; return (loss, gradients).

    The closure must be built from recordable primitives end to end; a
    non-recordable operation raises a capability error naming the op.
    Gradients are exact for the discrete program the closure executes.
    """
    var_params, var_map = params.as_vars()
    loss = loss_closure(var_params)
    if not isinstance(loss, Var):
        raise ParameterError("loss closure returned no recorded value; "
                             "did it touch the parameters?")
    loss.backward()
    grads = {}
    for name, var in var_map.items():
        if var.grad is None:
            grads[name] = np.zeros_like(var.value)
        else:
            grads[name] = var.grad
    return float(loss.value), grads


def check_gradients(loss_closure, params, n_coords=50, h=1e-5, seed=0):
    """Compare tape gradients against central differences.

    Returns (max_rel_err, checked) where checked lists
    (weight_name, flat_index, tape_value, fd_value, rel_err).
    """
    _, grads = grad(loss_closure, params)
    names = [n for n in params.weights if grads[n].size > 0]
    sizes = np.array([params.weights[n].size for n in names], dtype=float)
    rng = np.random.default_rng(seed)
    checked = []
    max_rel = 0.0
    base = params.values()
    for _ in range(n_coords):
        name = names[rng.choice(len(names), p=sizes / sizes.sum())]
        flat = int(rng.integers(0, base[name].size))
        for sign in (+1.0, -1.0):
            bumped = {k: v.copy() for k, v in base.items()}
            bumped[name].reshape(-1)[flat] += sign * h
            val = float(value_of(loss_closure(params.with_weights(bumped))))
            if sign > 0:
                up = val
            else:
                down = val
        fd = (up - down) / (2.0 * h)
        tape = float(grads[name].reshape(-1)[flat])
        rel = abs(tape - fd) / (abs(fd) + 1e-8)
        checked.append((name, flat, tape, fd, rel))
        max_rel = max(max_rel, rel)
    return max_rel, checked


# ---- Adam --------------------------------------------------------------


def init_adam(params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    zeros = {name: np.zeros_like(v) for name, v in params.values().items()}
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, step_count=0,
                     first_moment=zeros,
                     second_moment={k: v.copy() for k, v in zeros.items()})


def clip_gradients(grads, max_norm):
    """Scale all gradients down to the global norm budget; 0 disables."""
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {name: g * factor for name, g in grads.items()}


def adam_step(state, params, grads):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient in %r" % (name,))
    t = state.step_count + 1
    new_weights = {}
    values = params.values()
    for name, w in values.items():
        g = grads[name]
        m = state.beta1 * state.first_moment[name] + (1 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        new_weights[name] = w - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    state.step_count = t
    return params.with_weights(new_weights), state


# ---- forward machinery -------------------------------------------------


class _PointCache:
    """Per-time path quantities, shared across iterations.

    The solver visits the same boundary grid every iteration (the grid
    depends only on the step, knots, and query times), so interpolant
    evaluations are cached by exact float time.
    """

    def __init__(self, ext_path, direct_cap):
        self.ext_path = ext_path
        self.direct_cap = direct_cap
        self.store = {}

    def at(self, s):
        entry = self.store.get(s)
        if entry is None:
            _, adjacency = self.ext_path.eval(s)
            deriv = self.ext_path.eval_derivative(s)
            a_norm = normalize_adjacency(adjacency)
            dx = plain_path_derivative(deriv, self.direct_cap)
            entry = (a_norm, deriv, dx)
            self.store[s] = entry
        return entry


def _make_field(variant, params, cache, floor_lookup):
    if variant == "gnode":
        def field(s, z):
            return field_gnode(params, z, floor_lookup(s))
        return field
    if variant == "neural_cde_plain":
        def field(s, z):
            _, _, dx = cache.at(s)
            return field_neural_cde_plain(params, z, dx)
        return field

    def field(s, z):
        a_norm, deriv, _ = cache.at(s)
        return evaluate_field(params, z, a_norm, deriv)
    return field


class _FloorLookup:
    """Most recent normalized snapshot at or before a query time."""

    def __init__(self, obs):
        self.times = obs.times
        self.normalized = [normalize_adjacency(s.topology.adjacency)
                           for s in obs.snapshots]

    def __call__(self, t):
        idx = int(np.searchsorted(self.times, t, side="right") - 1)
        idx = min(max(idx, 0), len(self.normalized) - 1)
        return self.normalized[idx]


class ForwardPlan:
    """Precomputed, parameter-independent pieces of one training setup."""

    def __init__(self, train_obs, scheme, cfg, out_dim, features_t0=None):
        self.scheme = scheme
        self.train_obs = train_obs
        self.out_dim = out_dim
        self.t0 = float(train_obs.times[0])
        self.a0 = train_obs.snapshots[0].topology.adjacency
        self.features_t0 = features_t0
        self.path = build_path(train_obs, scheme)
        self.ext = extend_path(self.path, cfg.extrapolation_mode)
        self.cache = _PointCache(self.ext, cfg.direct_cap)
        self.floor = _FloorLookup(train_obs)
        self.solver_cfg = self._solver_for(cfg, train_obs)

    def _solver_for(self, cfg, train_obs):
        base = cfg.solver_config()
        if base.step is not None and self.scheme == "rectilinear":
            # The integration variable runs over the internal lead-lag
            # coordinate; rescale the step to keep the same step count.
            times = train_obs.times
            span = float(times[-1] - times[0])
            internal_span = self.path.domain[1] - self.path.domain[0]
            if span > 0 and internal_span > 0:
                scaled = base.step * internal_span / span
                base = SolverConfig(method=base.method, step=scaled,
                                    rtol=base.rtol, atol=base.atol,
                                    max_steps=base.max_steps)
        return base

    def to_solver_time(self, variant, t):
        if variant in ("gnode",):
            return float(t)
        if self.scheme == "rectilinear":
            return float(self.ext.to_internal(float(t)))
        return float(t)

    def start_time(self, variant):
        return self.to_solver_time(variant, self.t0)

    def run_states(self, params, query_times):
        """Integrate; returns embedding states aligned with query_times."""
        variant = params.variant
        s_queries = [self.to_solver_time(variant, t) for t in query_times]
        order = np.argsort(s_queries, kind="stable")
        sorted_queries = [s_queries[i] for i in order]
        z0 = init_embedding(params, self.t0, self.a0,
                            features_t0=self.features_t0)
        field = _make_field(variant, params, self.cache, self.floor)
        path_for_knots = None if variant == "gnode" else self.ext
        traj = integrate(field, path_for_knots, z0,
                         self.start_time(variant), sorted_queries,
                         self.solver_cfg)
        undo = np.empty(len(order), dtype=int)
        undo[order] = np.arange(len(order))
        return [traj.states[undo[i]] for i in range(len(query_times))]

    def run(self, params, query_times, head=None):
        """Integrate and decode at the given real query times."""
        head = decode if head is None else head
        states = self.run_states(params, query_times)
        preds = [head(params, z) for z in states]
        return stack(preds)


def proportional_counts(total):
    """80/20/20-proportioned (train, interp, extrap) counts for any total."""
    if total < 3:
        raise ParameterError("need at least 3 snapshots to split")
    interp = max(1, int(round(total * 20.0 / 120.0)))
    extrap = max(1, int(round(total * 20.0 / 120.0)))
    train_count = total - interp - extrap
    if train_count < 1:
        raise ParameterError("split leaves no training snapshots")
    return train_count, interp, extrap


def train(obs, variant, scheme, cfg, missing_mask=None):
    """Full training loop for the node-attribute protocol.

    Splits the snapshots, builds the interpolated path from the training
    block, and optimizes the mean squared error of decoded states at the
    training times.  Test metrics (mean absolute deviation at held-out
    interpolation and extrapolation times) are evaluated first at
    iteration zero and then every eval_every iterations.  Deterministic
    given (obs, cfg, seed); wall-clock is reported separately.
    """
    from .tasks import SplitSpec, split

    if obs.node_states is None:
        raise ParameterError("observations carry no node states to fit")
    t_start = time.perf_counter()

    total = len(obs.snapshots)
    if cfg.train_count is not None:
        spec = SplitSpec(cfg.train_count, cfg.interp_count, cfg.extrap_count)
    else:
        spec = SplitSpec(*proportional_counts(total))
    train_obs, interp_obs, extrap_obs = split(obs, spec, cfg.seed)
    if interp_obs is None or extrap_obs is None:
        raise ParameterError("attribute protocol needs interp and extrap "
                             "test snapshots")
    if missing_mask is not None:
        train_obs = mask_missing(train_obs, missing_mask)

    n = train_obs.snapshots[0].topology.n_nodes
    out_dim = train_obs.states_stack().shape[2]
    params = init_params(variant, n, cfg.embed_dim, out_dim=out_dim,
                         n_layers=cfg.n_layers, task="attributes",
                         seed=cfg.seed, activation=cfg.activation,
                         direct_cap=cfg.direct_cap, hidden_dim=cfg.hidden_dim)
    plan = ForwardPlan(train_obs, scheme, cfg, out_dim)

    train_times = train_obs.times
    train_targets = train_obs.states_stack()
    interp_times = interp_obs.times
    interp_targets = interp_obs.states_stack()
    extrap_times = extrap_obs.times
    extrap_targets = extrap_obs.states_stack()

    objective_loss = loss_mse if cfg.loss == "mse" else loss_l1

    def objective(p):
        preds = plan.run(p, train_times)
        return objective_loss(preds, train_targets)

    def evaluate(p):
        all_times = np.concatenate([interp_times, extrap_times])
        preds = plan.run(p, all_times)
        k = len(interp_times)
        interp_pred = value_of(preds)[:k]
        extrap_pred = value_of(preds)[k:]
        interp_l1 = float(value_of(loss_l1(interp_pred, interp_targets)))
        extrap_l1 = float(value_of(loss_l1(extrap_pred, extrap_targets)))
        pooled_pred = value_of(preds)
        pooled_tgt = np.concatenate([interp_targets, extrap_targets])
        pooled_l1 = float(value_of(loss_l1(pooled_pred, pooled_tgt)))
        return {"interp_l1": interp_l1, "extrap_l1": extrap_l1,
                "sum_l1": interp_l1 + extrap_l1, "pooled_l1": pooled_l1}

    adam = init_adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                     eps=cfg.eps)
    train_losses = []
    wall = []
    evals = []
    diverged = False
    message = ""

    record = evaluate(params)
    record["iteration"] = 0
    evals.append(record)

    for it in range(1, cfg.iterations + 1):
        tick = time.perf_counter()
        try:
            loss_value, grads = grad(objective, params)
            if not np.isfinite(loss_value):
                raise DivergenceError("non-finite training loss",
                                      time=None)
            grads = clip_gradients(grads, cfg.clip_norm)
            params, adam = adam_step(adam, params, grads)
        except DivergenceError as err:
            diverged = True
            message = str(err)
            wall.append(time.perf_counter() - tick)
            break
        train_losses.append(loss_value)
        wall.append(time.perf_counter() - tick)
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            record = evaluate(params)
            record["iteration"] = it
            evals.append(record)

    return TrainReport(
        variant=variant, scheme=scheme, seed=cfg.seed,
        train_losses=train_losses, evals=evals, wall_seconds=wall,
        total_seconds=time.perf_counter() - t_start,
        diverged=diverged, divergence_message=message,
        final_params=params, config=cfg)


# ---- serialization -----------------------------------------------------


def write_report_json(report, path):
    """Deterministic report payload (no timing)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.deterministic_dict(), fh, sort_keys=True,
                  separators=(",", ":"))
        fh.write("\n")


def write_timing_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.timing_dict(), fh, sort_keys=True,
                  separators=(",", ":"))
        fh.write("\n")


def write_curves_csv(report, path):
    """Loss-curve rows at evaluation cadence."""
    losses = report.train_losses
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,train_loss,interp_l1,extrap_l1,sum_l1,pooled_l1\n")
        for record in report.evals:
            it = record["iteration"]
            if it == 0 or not losses:
                train_loss = ""
            else:
                train_loss = "%.12g" % losses[min(it, len(losses)) - 1]
            fh.write("%d,%s,%.12g,%.12g,%.12g,%.12g\n" % (
                it, train_loss, record["interp_l1"], record["extrap_l1"],
                record["sum_l1"], record["pooled_l1"]))
