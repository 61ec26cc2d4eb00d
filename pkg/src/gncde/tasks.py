"""End-to-end task pipelines: splits, the three applications, metrics.

The attribute task is the primary protocol; classification and link
prediction reuse the same trajectory machinery with their own heads,
losses, and metrics.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import concat, reshape, value_of
from .dyngraph import DynamicGraphObservations
from .errors import DivergenceError, ParameterError
from .paths import build_channel_path, mask_missing
from .train import (
    ForwardPlan,
    TrainConfig,
    adam_step,
    clip_gradients,
    grad,
    init_adam,
    loss_bce_logits,
    loss_cross_entropy,
    loss_l1,
    proportional_counts,
    train,
)
from .vfield import (
    decode,
    decode_logits,
    decode_pair_logits,
    decode_pairs,
    init_params,
)

RESULT_COLUMNS = ("task", "dynamics", "topology", "variant", "scheme", "seed",
                  "interp_l1", "extrap_l1", "sum_l1", "accuracy", "auc",
                  "wall_seconds")


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    interp_count: int
    extrap_count: int

    def __post_init__(self):
        if self.train_count < 1:
            raise ParameterError("train_count must be at least 1")
        if self.interp_count < 0 or self.extrap_count < 0:
            raise ParameterError("interp and extrap counts must be nonnegative")

    @property
    def total(self):
        return self.train_count + self.interp_count + self.extrap_count


@dataclass
class TaskResult:
    task: str
    variant: str
    scheme: str
    seed: int
    metrics: dict
    per_snapshot: list
    wall_seconds: float
    diverged: bool = False
    report: object = None

    def to_json_dict(self):
        """Deterministic payload; wall-clock is reported separately."""
        return {
            "task": self.task,
            "variant": self.variant,
            "scheme": self.scheme,
            "seed": self.seed,
            "metrics": self.metrics,
            "per_snapshot": self.per_snapshot,
            "diverged": self.diverged,
        }


def split_indices(total, spec, seed):
    """Index triple (train, interp, extrap) behind split()."""
    if spec.total != total:
        raise ParameterError("split counts sum to %d but dataset has %d"
                             % (spec.total, total))
    pre = total - spec.extrap_count
    extrap_idx = list(range(pre, total))
    candidates = list(range(1, pre - 1))
    if spec.interp_count > len(candidates):
        raise ParameterError("interp_count=%d exceeds %d interior snapshots"
                             % (spec.interp_count, len(candidates)))
    rng = np.random.default_rng(seed)
    interp_idx = sorted(rng.choice(candidates, size=spec.interp_count,
                                   replace=False).tolist())
    interp_set = set(interp_idx)
    train_idx = [i for i in range(pre) if i not in interp_set]
    return train_idx, interp_idx, extrap_idx


def split(obs, spec, seed):
    """Partition snapshots into (train, interp-test, extrap-test).

    The extrapolation block is the chronological tail.  Interpolation
    targets are sampled without replacement from strictly interior
    pre-extrapolation indices (never the first snapshot, which anchors
    the path, and never the last training-range snapshot), so every
    interpolation query falls inside the training time range.
    """
    train_idx, interp_idx, extrap_idx = split_indices(
        len(obs.snapshots), spec, seed)

    def part(indices):
        return obs.subset(indices) if indices else None

    return obs.subset(train_idx), part(interp_idx), part(extrap_idx)


def _coerce_dataset(dataset):
    """Accept raw observations or a (obs, generator_config, seed) triple."""
    if isinstance(dataset, DynamicGraphObservations):
        return dataset, {}
    obs, generator_config, seed = dataset
    generator_config = generator_config or {}
    meta = {"dynamics": generator_config.get("dynamics", ""),
            "topology": generator_config.get("topology", ""),
            "dataset_seed": seed}
    return obs, meta


def _split_spec_for(cfg, total):
    if cfg.train_count is not None:
        return SplitSpec(cfg.train_count, cfg.interp_count, cfg.extrap_count)
    return SplitSpec(*proportional_counts(total))


# ---- metrics -----------------------------------------------------------


def accuracy_score(predicted, true_labels):
    p = np.asarray(predicted, dtype=int).reshape(-1)
    t = np.asarray(true_labels, dtype=int).reshape(-1)
    if p.shape != t.shape:
        raise ParameterError("label arrays differ in length")
    if p.size == 0:
        raise ParameterError("no labels to score")
    return float(np.mean(p == t))


def auc_score(positive_scores, negative_scores):
    """Rank-based AUC with tie-averaged ranks."""
    pos = np.asarray(positive_scores, dtype=float).reshape(-1)
    neg = np.asarray(negative_scores, dtype=float).reshape(-1)
    if pos.size == 0 or neg.size == 0:
        raise ParameterError("AUC needs both positive and negative scores")
    scores = np.concatenate([pos, neg])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_ranks = ranks[:pos.size]
    auc = (pos_ranks.sum() - pos.size * (pos.size + 1) / 2.0)
    return float(auc / (pos.size * neg.size))


def per_snapshot_l1(preds, targets):
    p = np.asarray(value_of(preds), dtype=float)
    t = np.asarray(targets, dtype=float)
    return [float(np.mean(np.abs(p[k] - t[k]))) for k in range(p.shape[0])]


# ---- node attribute prediction ----------------------------------------


def run_node_attribute_task(dataset, variant, scheme, cfg, missing_mask=None,
                            predict_override=None):
    """Train and score the attribute-forecast protocol.

    predict_override is a test hook: a callable mapping query times to
    predictions, used in place of a trained model.
    """
    obs, meta = _coerce_dataset(dataset)
    tick = time.perf_counter()
    spec = _split_spec_for(cfg, len(obs.snapshots))
    train_obs, interp_obs, extrap_obs = split(obs, spec, cfg.seed)
    if interp_obs is None or extrap_obs is None:
        raise ParameterError("attribute protocol needs interp and extrap "
                             "test snapshots")
    interp_targets = interp_obs.states_stack()
    extrap_targets = extrap_obs.states_stack()

    if predict_override is not None:
        interp_pred = np.asarray(predict_override(interp_obs.times))
        extrap_pred = np.asarray(predict_override(extrap_obs.times))
        report = None
        diverged = False
        final_params = None
    else:
        report = train(obs, variant, scheme, cfg, missing_mask=missing_mask)
        diverged = report.diverged
        final_params = report.final_params
        masked_train = train_obs
        if missing_mask is not None:
            masked_train = mask_missing(train_obs, missing_mask)
        plan = ForwardPlan(masked_train, scheme, cfg,
                           out_dim=interp_targets.shape[2])
        interp_pred = value_of(plan.run(final_params, interp_obs.times))
        extrap_pred = value_of(plan.run(final_params, extrap_obs.times))

    interp_l1 = float(value_of(loss_l1(interp_pred, interp_targets)))
    extrap_l1 = float(value_of(loss_l1(extrap_pred, extrap_targets)))
    breakdown = (
        [{"time": float(t), "split": "interp", "l1": v}
         for t, v in zip(interp_obs.times,
                         per_snapshot_l1(interp_pred, interp_targets))]
        + [{"time": float(t), "split": "extrap", "l1": v}
           for t, v in zip(extrap_obs.times,
                           per_snapshot_l1(extrap_pred, extrap_targets))])
    metrics = {"interp_l1": interp_l1, "extrap_l1": extrap_l1,
               "sum_l1": interp_l1 + extrap_l1}
    return TaskResult(task="attributes", variant=variant, scheme=scheme,
                      seed=cfg.seed, metrics=metrics, per_snapshot=breakdown,
                      wall_seconds=time.perf_counter() - tick,
                      diverged=diverged, report=report)


# ---- node classification ----------------------------------------------


def synthesize_labels(obs, n_classes=4):
    """Quantile-binned labels from the first state channel, per snapshot."""
    states = obs.states_stack()[:, :, 0]
    edges = np.quantile(states, [k / n_classes for k in range(1, n_classes)])
    return np.digitize(states, edges)


def run_node_classification_task(dataset, variant, scheme, cfg, labels=None,
                                 n_classes=4):
    """Cross-entropy training of per-node labels; accuracy on extrapolation.

    labels must align with the snapshots ((N, n) integers); omitted, they
    are synthesized by quantile-binning the observed states.  Node states
    feed the initial embedding through a feature path interpolated with
    the same machinery as the structure.
    """
    obs, meta = _coerce_dataset(dataset)
    tick = time.perf_counter()
    if labels is None:
        if obs.node_states is None:
            raise ParameterError("no labels given and no states to bin")
        labels = synthesize_labels(obs, n_classes)
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 2 or labels.shape[0] != len(obs.snapshots):
        raise ParameterError("labels must be (n_snapshots, n_nodes)")
    n_classes = max(n_classes, int(labels.max()) + 1)

    spec = _split_spec_for(cfg, len(obs.snapshots))
    train_rows, _, extrap_rows = split_indices(len(obs.snapshots), spec,
                                               cfg.seed)
    if not extrap_rows:
        raise ParameterError("classification scores extrapolation snapshots; "
                             "extrap_count must be positive")
    train_obs = obs.subset(train_rows)
    extrap_obs = obs.subset(extrap_rows)
    train_labels = labels[train_rows]
    extrap_labels = labels[extrap_rows]

    n = train_obs.snapshots[0].topology.n_nodes
    feature_dim = 0
    features_t0 = None
    if train_obs.node_states is not None:
        states = train_obs.states_stack()
        feature_dim = states.shape[2]
        feature_path = build_channel_path(
            train_obs.times, states.reshape(states.shape[0], -1),
            "natural_cubic")
        features_t0 = feature_path.eval(
            float(train_obs.times[0])).reshape(n, feature_dim)

    params = init_params(variant, n, cfg.embed_dim, out_dim=n_classes,
                         n_layers=cfg.n_layers, task="classify",
                         seed=cfg.seed, activation=cfg.activation,
                         direct_cap=cfg.direct_cap, hidden_dim=cfg.hidden_dim,
                         feature_dim=feature_dim)
    plan = ForwardPlan(train_obs, scheme, cfg, out_dim=n_classes,
                       features_t0=features_t0)
    train_times = train_obs.times
    flat_labels = train_labels.reshape(-1)

    def objective(p):
        logits = plan.run(p, train_times, head=decode_logits)
        flat = reshape(logits, (len(train_times) * n, n_classes))
        return loss_cross_entropy(flat, flat_labels)

    params, losses, diverged, _ = _optimize(objective, params, cfg)

    probs = value_of(plan.run(params, extrap_obs.times))
    row_sums = probs.sum(axis=2)
    predicted = probs.argmax(axis=2)
    accuracy = accuracy_score(predicted, extrap_labels)
    metrics = {"accuracy": accuracy,
               "final_train_loss": losses[-1] if losses else None,
               "row_sum_max_dev": float(np.max(np.abs(row_sums - 1.0)))}
    breakdown = [{"time": float(t), "accuracy": accuracy_score(
        predicted[k], extrap_labels[k])}
        for k, t in enumerate(extrap_obs.times)]
    return TaskResult(task="classify", variant=variant, scheme=scheme,
                      seed=cfg.seed, metrics=metrics, per_snapshot=breakdown,
                      wall_seconds=time.perf_counter() - tick,
                      diverged=diverged)


# ---- temporal link prediction -----------------------------------------


def _edge_pairs(adjacency):
    i, j = np.nonzero(np.triu(adjacency, 1))
    return np.stack([i, j], axis=1) if i.size else np.zeros((0, 2), dtype=int)


def _sample_non_edges(adjacency, count, rng):
    n = adjacency.shape[0]
    blocked = adjacency + np.eye(n)
    out = []
    guard = 0
    while len(out) < count and guard < 100 * count + 100:
        guard += 1
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        if i >= j or blocked[i, j]:
            continue
        out.append((i, j))
        blocked[i, j] = 1.0
    return np.array(out, dtype=int) if out else np.zeros((0, 2), dtype=int)


def run_link_prediction_task(dataset, variant, scheme, cfg):
    """Edge-existence training on the training window; AUC on extrapolation.

    Positives are the edges present in each snapshot; negatives are an
    equal count of seeded uniform non-edges.  Evaluation pairs come from
    the extrapolation snapshots with fresh seeded negatives.
    """
    obs, meta = _coerce_dataset(dataset)
    tick = time.perf_counter()
    spec = _split_spec_for(cfg, len(obs.snapshots))
    train_obs, _, extrap_obs = split(obs, spec, cfg.seed)
    if extrap_obs is None:
        raise ParameterError("link prediction scores extrapolation "
                             "snapshots; extrap_count must be positive")
    n = train_obs.snapshots[0].topology.n_nodes

    rng = np.random.default_rng(cfg.seed + 1)
    train_pairs = []
    train_targets = []
    for snap in train_obs.snapshots:
        pos = _edge_pairs(snap.topology.adjacency)
        neg = _sample_non_edges(snap.topology.adjacency, len(pos), rng)
        pairs = np.concatenate([pos, neg], axis=0)
        train_pairs.append(pairs)
        train_targets.append(np.concatenate(
            [np.ones(len(pos)), np.zeros(len(neg))]))

    extrap_positives = [_edge_pairs(s.topology.adjacency)
                        for s in extrap_obs.snapshots]
    if sum(len(p) for p in extrap_positives) == 0:
        raise ParameterError("no edges present in the extrapolation window")

    params = init_params(variant, n, cfg.embed_dim, out_dim=1,
                         n_layers=cfg.n_layers, task="link", seed=cfg.seed,
                         activation=cfg.activation, direct_cap=cfg.direct_cap,
                         hidden_dim=cfg.hidden_dim)
    plan = ForwardPlan(train_obs, scheme, cfg, out_dim=1)
    train_times = train_obs.times
    target_vec = np.concatenate(train_targets).reshape(-1, 1)

    def objective(p):
        states = plan.run_states(p, train_times)
        parts = [decode_pair_logits(p, state, pairs)
                 for state, pairs in zip(states, train_pairs)
                 if len(pairs)]
        logits = concat(parts, axis=0)
        return loss_bce_logits(logits, target_vec)

    params, losses, diverged, _ = _optimize(objective, params, cfg)

    eval_rng = np.random.default_rng(cfg.seed + 2)
    states = plan.run_states(params, extrap_obs.times)
    pos_scores = []
    neg_scores = []
    for state, snap, pos in zip(states, extrap_obs.snapshots, extrap_positives):
        if len(pos) == 0:
            continue
        neg = _sample_non_edges(snap.topology.adjacency, len(pos), eval_rng)
        pos_scores.append(value_of(decode_pairs(params, state, pos)).reshape(-1))
        if len(neg):
            neg_scores.append(value_of(
                decode_pairs(params, state, neg)).reshape(-1))
    auc = auc_score(np.concatenate(pos_scores), np.concatenate(neg_scores))
    metrics = {"auc": auc,
               "final_train_loss": losses[-1] if losses else None}
    return TaskResult(task="link", variant=variant, scheme=scheme,
                      seed=cfg.seed, metrics=metrics, per_snapshot=[],
                      wall_seconds=time.perf_counter() - tick,
                      diverged=diverged)


# ---- shared optimizer loop --------------------------------------------


def _optimize(objective, params, cfg):
    adam = init_adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                     eps=cfg.eps)
    losses = []
    for _ in range(cfg.iterations):
        try:
            loss_value, grads = grad(objective, params)
            if not np.isfinite(loss_value):
                raise DivergenceError("non-finite training loss")
            grads = clip_gradients(grads, cfg.clip_norm)
            params, adam = adam_step(adam, params, grads)
        except DivergenceError as err:
            return params, losses, True, str(err)
        losses.append(loss_value)
    return params, losses, False, ""


# ---- results CSV -------------------------------------------------------


def result_row(result, dynamics="", topology=""):
    metrics = result.metrics
    def fmt(key):
        v = metrics.get(key)
        return "%.12g" % v if v is not None else ""
    return {
        "task": result.task,
        "dynamics": dynamics,
        "topology": topology,
        "variant": result.variant,
        "scheme": result.scheme,
        "seed": str(result.seed),
        "interp_l1": fmt("interp_l1"),
        "extrap_l1": fmt("extrap_l1"),
        "sum_l1": fmt("sum_l1"),
        "accuracy": fmt("accuracy"),
        "auc": fmt("auc"),
        "wall_seconds": "%.3f" % result.wall_seconds,
    }


def append_result_row(path, row):
    """Append one row to the aggregate CSV, writing the header if new."""
    fresh = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if fresh:
            fh.write(",".join(RESULT_COLUMNS) + "\n")
        fh.write(",".join(row[c] for c in RESULT_COLUMNS) + "\n")
