"""GCN vector fields, initial embeddings, and decoders for all model variants.

Every field maps an embedding state and the structural inputs at one instant
to a state derivative.  The functions run in two modes: handed plain numpy
arrays they return plain arrays, handed recorded variables (weights wrapped
in Var) they build the reverse-mode tape.  Data inputs (adjacency, path
derivatives) stay plain in both modes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import (
    Var,
    concat,
    exp,
    log_softmax_rows,
    matmul,
    relu,
    reshape,
    sigmoid,
    take_rows,
    transpose,
    value_of,
)
from .errors import CapabilityError, ParameterError

VARIANTS = ("gncde_full", "gncde_direct", "gncde_approx", "gncde_linear",
            "gnode", "neural_cde_plain")
TASKS = ("attributes", "classify", "link")
ACTIVATIONS = ("relu", "sigmoid")

DEFAULT_DIRECT_CAP = 20

_ACT = {"relu": relu, "sigmoid": sigmoid}


def normalize_adjacency(adjacency, allow_negative=False):
    """Symmetric degree normalization with self-loops.

    Interpolated adjacency values can dip below zero (spline overshoot);
    by default those entries are clamped to zero before normalization so
    the degree roots stay real.  Isolated nodes keep degree one through
    the self-loop.
    """
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError("adjacency must be square, got shape %s" % (a.shape,))
    if not allow_negative:
        a = np.maximum(a, 0.0)
    a_hat = a + np.eye(a.shape[0])
    deg = np.maximum(a_hat.sum(axis=1), 1e-12)
    inv_root = 1.0 / np.sqrt(deg)
    return a_hat * inv_root[:, None] * inv_root[None, :]


@dataclass(frozen=True)
class VectorFieldParams:
    """Weights and static metadata for one model variant.

    weights maps name -> array in a fixed creation order; training swaps
    the arrays for recorded variables via with_weights.  structure_blind
    marks a gncde_full parameter set whose message passing reads the
    stored mixing matrix instead of the supplied adjacency.
    """

    variant: str
    n_nodes: int
    embed_dim: int
    out_dim: int
    n_layers: int
    task: str
    activation: str
    direct_cap: int
    seed: int
    feature_dim: int
    static_dim: int
    hidden_dim: int
    structure_blind: bool
    weights: dict

    def with_weights(self, new_weights):
        return replace(self, weights=dict(new_weights))

    def as_vars(self):
        """Wrap every weight in a Var; returns (params, name -> Var)."""
        wrapped = {name: Var(np.array(value_of(w), dtype=float))
                   for name, w in self.weights.items()}
        return self.with_weights(wrapped), wrapped

    def values(self):
        """Plain-array view of the weights in creation order."""
        return {name: np.array(value_of(w), dtype=float)
                for name, w in self.weights.items()}


def _glorot(rng, shape):
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def plain_path_dim(n_nodes, direct_cap=DEFAULT_DIRECT_CAP):
    """Channel count of the flattened path seen by the plain baseline."""
    if n_nodes <= direct_cap:
        return n_nodes * n_nodes + 1
    return n_nodes + 1


def plain_path_features(adjacency, direct_cap=DEFAULT_DIRECT_CAP):
    """Structural channels for the plain baseline (no time channel).

    Small graphs expose every adjacency entry; larger ones are pooled to
    per-node row sums to keep the baseline runnable.
    """
    a = np.asarray(adjacency, dtype=float)
    n = a.shape[0]
    if n <= direct_cap:
        return a.reshape(-1)
    return a.sum(axis=1)


def plain_path_derivative(deriv, direct_cap=DEFAULT_DIRECT_CAP):
    """Flatten a PathDerivative into the plain baseline's dX vector."""
    parts = plain_path_features(deriv.d_adjacency, direct_cap)
    return np.concatenate([[deriv.d_time_channel], parts])


def init_params(variant, n_nodes, embed_dim, out_dim=1, n_layers=1,
                task="attributes", seed=0, activation="relu",
                direct_cap=DEFAULT_DIRECT_CAP, feature_dim=0, static_dim=0,
                hidden_dim=64):
    """Create a seeded parameter set for one variant.

    n_layers counts message-passing applications; the weight list holds
    one extra matrix for the output application, so n_layers=1 owns
    layer_w0 and layer_w1.
    """
    if variant not in VARIANTS:
        raise ParameterError("unknown variant %r" % (variant,))
    if task not in TASKS:
        raise ParameterError("unknown task %r" % (task,))
    if activation not in ACTIVATIONS:
        raise ParameterError("unknown activation %r" % (activation,))
    if n_nodes < 1 or embed_dim < 1 or out_dim < 1:
        raise ParameterError("n_nodes, embed_dim, out_dim must be positive")
    if n_layers < 0:
        raise ParameterError("n_layers must be nonnegative")
    if variant == "gncde_direct" and n_nodes > direct_cap:
        raise CapabilityError(
            "field_direct",
            "n=%d exceeds direct_cap=%d, use gncde_approx" % (n_nodes, direct_cap))

    rng = np.random.default_rng(seed)
    n, d, c = n_nodes, embed_dim, out_dim
    weights = {}

    if variant == "neural_cde_plain":
        p_dim = plain_path_dim(n, direct_cap)
        weights["init_w"] = _glorot(rng, (p_dim + feature_dim + static_dim, d))
        weights["mlp_w0"] = _glorot(rng, (d, hidden_dim))
        weights["mlp_b0"] = np.zeros(hidden_dim)
        weights["mlp_w1"] = _glorot(rng, (hidden_dim, d * p_dim))
        weights["mlp_b1"] = np.zeros(d * p_dim)
        weights["lift_w"] = _glorot(rng, (d, n * d))
        weights["lift_b"] = np.zeros(n * d)
    else:
        weights["init_w"] = _glorot(rng, (n + 1 + feature_dim + static_dim, d))
        for l in range(n_layers + 1):
            weights["layer_w%d" % l] = _glorot(rng, (d, d))
        uses_direct_form = (
            variant in ("gncde_direct", "gncde_linear")
            or (variant == "gncde_full" and n <= direct_cap))
        if uses_direct_form:
            weights["proj_w"] = _glorot(rng, (d * d, n * n))
            weights["time_gain"] = np.ones((1, 1))
        if variant == "gncde_approx" or (variant == "gncde_full" and n > direct_cap):
            weights["fusion_w"] = np.concatenate(
                [np.eye(n), 0.1 * np.eye(n)], axis=0)
        if variant == "gncde_linear":
            weights["mixing"] = _glorot(rng, (n, n))

    if task == "attributes":
        weights["dec_w"] = _glorot(rng, (d, c))
        weights["dec_b"] = np.zeros(c)
    elif task == "classify":
        weights["dec_w0"] = _glorot(rng, (d, d))
        weights["dec_b0"] = np.zeros(d)
        weights["dec_w1"] = _glorot(rng, (d, c))
        weights["dec_b1"] = np.zeros(c)
    else:
        weights["dec_w0"] = _glorot(rng, (2 * d, d))
        weights["dec_b0"] = np.zeros(d)
        weights["dec_w1"] = _glorot(rng, (d, 1))
        weights["dec_b1"] = np.zeros(1)

    return VectorFieldParams(
        variant=variant, n_nodes=n, embed_dim=d, out_dim=c,
        n_layers=n_layers, task=task, activation=activation,
        direct_cap=direct_cap, seed=seed, feature_dim=feature_dim,
        static_dim=static_dim, hidden_dim=hidden_dim,
        structure_blind=False, weights=weights)


def init_embedding(params, t0, adjacency_t0, features_t0=None, static_inputs=None):
    """Initial embedding from the first observation.

    Graph variants read each node's adjacency row with the start time
    appended as a constant channel (plus optional node features and
    static inputs); the plain baseline reads its pooled path channels.
    The time channel is what breaks translational invariance.
    """
    w = params.weights["init_w"]
    n = params.n_nodes
    a0 = np.asarray(adjacency_t0, dtype=float)
    if a0.shape != (n, n):
        raise ParameterError("adjacency_t0 shape %s, want (%d, %d)" % (a0.shape, n, n))

    if params.variant == "neural_cde_plain":
        cols = [np.concatenate([[float(t0)],
                                plain_path_features(a0, params.direct_cap)])]
        if params.feature_dim:
            if features_t0 is None:
                raise ParameterError("params expect feature_dim=%d node features"
                                     % params.feature_dim)
            cols.append(np.asarray(features_t0, dtype=float).mean(axis=0))
        if params.static_dim:
            if static_inputs is None:
                raise ParameterError("params expect static_dim=%d static inputs"
                                     % params.static_dim)
            cols.append(np.asarray(static_inputs, dtype=float).mean(axis=0))
        x = np.concatenate(cols).reshape(1, -1)
    else:
        cols = [a0, np.full((n, 1), float(t0))]
        if params.feature_dim:
            if features_t0 is None:
                raise ParameterError("params expect feature_dim=%d node features"
                                     % params.feature_dim)
            f = np.asarray(features_t0, dtype=float).reshape(n, -1)
            if f.shape[1] != params.feature_dim:
                raise ParameterError("features_t0 has %d channels, want %d"
                                     % (f.shape[1], params.feature_dim))
            cols.append(f)
        if params.static_dim:
            if static_inputs is None:
                raise ParameterError("params expect static_dim=%d static inputs"
                                     % params.static_dim)
            cols.append(np.asarray(static_inputs, dtype=float).reshape(n, -1))
        x = np.concatenate(cols, axis=1)

    expected = value_of(w).shape[0]
    if x.shape[1] != expected:
        raise ParameterError("init input width %d, weights expect %d"
                             % (x.shape[1], expected))
    return matmul(x, w)


def _message_passing(params, z, mix):
    """Apply the layer recurrence and the output weight through sigma."""
    act = _ACT[params.activation]
    h = z
    for l in range(params.n_layers):
        h = act(matmul(matmul(mix, h), params.weights["layer_w%d" % l]))
    return act(matmul(matmul(mix, h),
                      params.weights["layer_w%d" % params.n_layers]))


def _projected_field(params, z, mix, d_adjacency, dt_ds):
    """Shared direct-form pathway: gate times (time drift + projected dA).

    The gate G = sigma(mix Z^(L) W^(L)) multiplies a scalar time gain on
    the dt/ds channel and right-multiplies the d x d map obtained by
    contracting the projection weight against the structural derivative.
    """
    g = _message_passing(params, z, mix)
    d = params.embed_dim
    da_col = np.asarray(d_adjacency, dtype=float).reshape(-1, 1)
    m = reshape(matmul(params.weights["proj_w"], da_col), (d, d))
    drift = params.weights["time_gain"] * g * float(dt_ds)
    return drift + matmul(g, m)


def field_direct(params, z, a_norm, d_adjacency, dt_ds):
    """Exact tensor-field form: full contraction against (dt_ds, dA).

    Memory in the projection grows like n^2 d^2, so this form is gated
    behind direct_cap; larger graphs go through field_approx.
    """
    if params.n_nodes > params.direct_cap:
        raise CapabilityError(
            "field_direct",
            "n=%d exceeds direct_cap=%d, use field_approx"
            % (params.n_nodes, params.direct_cap))
    if "proj_w" not in params.weights:
        raise ParameterError("params lack the direct-form projection weight")
    return _projected_field(params, z, a_norm, d_adjacency, dt_ds)


def field_approx(params, z, a_norm, d_adjacency):
    """Fused-structure form: mix [A_norm, dA] through the fusion weight.

    The normalized adjacency block and the raw derivative block are
    concatenated column-wise and fused into a single n x n operator that
    drives an ordinary GCN stack.  Cost per call is O(L (n^2 d + n d^2)).
    """
    if "fusion_w" not in params.weights:
        raise ParameterError("params lack the fusion weight")
    n = params.n_nodes
    a = np.asarray(value_of(a_norm), dtype=float)
    da = np.asarray(d_adjacency, dtype=float)
    if a.shape != (n, n) or da.shape != (n, n):
        raise ParameterError("adjacency blocks must be (%d, %d)" % (n, n))
    stacked = np.concatenate([a, da], axis=1)
    fused = matmul(stacked, params.weights["fusion_w"])
    act = _ACT[params.activation]
    h = z
    for l in range(params.n_layers):
        h = act(matmul(matmul(fused, h), params.weights["layer_w%d" % l]))
    return act(matmul(matmul(fused, h),
                      params.weights["layer_w%d" % params.n_layers]))


def field_linear_variant(params, z, d_adjacency, dt_ds):
    """Structure-blind field: a learned mixing matrix replaces the adjacency."""
    if "mixing" not in params.weights:
        raise ParameterError("params lack the mixing matrix")
    return _projected_field(params, z, params.weights["mixing"],
                            d_adjacency, dt_ds)


def field_gnode(params, z, a_floor_norm):
    """Snapshot-ODE field: plain GCN on the most recent normalized snapshot."""
    return _message_passing(params, z, a_floor_norm)


def field_neural_cde_plain(params, z_flat, d_x):
    """Non-graph baseline: MLP-valued field times the flattened derivative."""
    w0, b0 = params.weights["mlp_w0"], params.weights["mlp_b0"]
    w1, b1 = params.weights["mlp_w1"], params.weights["mlp_b1"]
    hidden = relu(matmul(z_flat, w0) + b0)
    flat = matmul(hidden, w1) + b1
    d = params.embed_dim
    p_dim = plain_path_dim(params.n_nodes, params.direct_cap)
    fieldmat = reshape(flat, (d, p_dim))
    dx_col = np.asarray(d_x, dtype=float).reshape(-1, 1)
    return transpose(matmul(fieldmat, dx_col))


def field_full(params, z, a_norm, deriv):
    """Dispatching field: exact direct form when n allows it, else fused.

    deriv is a PathDerivative; a structure-blind parameter set routes its
    message passing through the stored mixing matrix, which is how the
    containment of the blind family inside the full one is realized.
    """
    if "proj_w" in params.weights:
        if params.n_nodes > params.direct_cap:
            raise CapabilityError(
                "field_direct",
                "n=%d exceeds direct_cap=%d" % (params.n_nodes, params.direct_cap))
        mix = params.weights["mixing"] if params.structure_blind else a_norm
        return _projected_field(params, z, mix, deriv.d_adjacency,
                                deriv.d_time_channel)
    if params.structure_blind:
        raise ParameterError("structure-blind params require the direct form")
    return field_approx(params, z, a_norm, deriv.d_adjacency)


def evaluate_field(params, z, a_norm, deriv):
    """Uniform entry point for the CDE variants (not gnode or plain)."""
    variant = params.variant
    if variant == "gncde_full":
        return field_full(params, z, a_norm, deriv)
    if variant == "gncde_direct":
        return field_direct(params, z, a_norm, deriv.d_adjacency,
                            deriv.d_time_channel)
    if variant == "gncde_approx":
        return field_approx(params, z, a_norm, deriv.d_adjacency)
    if variant == "gncde_linear":
        return field_linear_variant(params, z, deriv.d_adjacency,
                                    deriv.d_time_channel)
    raise ParameterError("variant %r has no uniform CDE field" % (variant,))


def from_linear(linear_params):
    """Embed a structure-blind parameter set into the full family.

    The returned gncde_full set carries the same weights plus the flag
    that routes message passing through the stored mixing matrix, so both
    parameter sets evaluate through one code path and agree exactly.
    """
    if linear_params.variant != "gncde_linear":
        raise ParameterError("expected gncde_linear params, got %r"
                             % (linear_params.variant,))
    return replace(linear_params, variant="gncde_full", structure_blind=True,
                   weights=dict(linear_params.weights))


def fit_fusion_to_direct(direct_params, triples, ridge=1e-10):
    """Least-squares fit of the fusion weight to reproduce the direct field.

    triples is a sequence of (Z, A_norm, dA) arrays.  The direct field is
    evaluated with unit time slope; the fused model shares the direct
    model's layer weights and its fusion weight solves the linear system
    in the pre-activation (valid when the working regime keeps the
    activations positive, which is where the fused form tracks the
    direct one).  Returns gncde_approx params.
    """
    if direct_params.n_layers != 0:
        raise ParameterError("fusion fitting expects n_layers=0 params")
    n, d = direct_params.n_nodes, direct_params.embed_dim
    w_out = np.asarray(value_of(direct_params.weights["layer_w0"]), dtype=float)

    rows = []
    targets = []
    for z, a_norm, da in triples:
        y = value_of(field_direct(direct_params, np.asarray(z, dtype=float),
                                  np.asarray(a_norm, dtype=float),
                                  np.asarray(da, dtype=float), 1.0))
        b = np.asarray(z, dtype=float) @ w_out
        stacked = np.concatenate([np.asarray(a_norm, dtype=float),
                                  np.asarray(da, dtype=float)], axis=1)
        rows.append(np.kron(stacked, b.T))
        targets.append(np.asarray(y).reshape(-1))
    x = np.concatenate(rows, axis=0)
    y = np.concatenate(targets)
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    coef = np.linalg.solve(gram, x.T @ y)
    fusion = coef.reshape(2 * n, n)

    approx = init_params("gncde_approx", n, d, out_dim=direct_params.out_dim,
                         n_layers=0, task=direct_params.task,
                         seed=direct_params.seed,
                         activation=direct_params.activation,
                         direct_cap=direct_params.direct_cap)
    new_weights = dict(approx.weights)
    new_weights["layer_w0"] = w_out.copy()
    new_weights["fusion_w"] = fusion
    for name in ("dec_w", "dec_b", "dec_w0", "dec_b0", "dec_w1", "dec_b1"):
        if name in direct_params.weights:
            new_weights[name] = np.array(value_of(direct_params.weights[name]))
    return approx.with_weights(new_weights)


def node_embeddings(params, z):
    """Per-node embedding matrix; lifts the plain baseline's global state."""
    if params.variant != "neural_cde_plain":
        return z
    lifted = matmul(z, params.weights["lift_w"]) + params.weights["lift_b"]
    return reshape(lifted, (params.n_nodes, params.embed_dim))


def decode(params, z):
    """Decoder head: attributes are affine, classification is MLP+softmax."""
    h = node_embeddings(params, z)
    if params.task == "attributes":
        return matmul(h, params.weights["dec_w"]) + params.weights["dec_b"]
    if params.task == "classify":
        logits = matmul(relu(matmul(h, params.weights["dec_w0"])
                             + params.weights["dec_b0"]),
                        params.weights["dec_w1"]) + params.weights["dec_b1"]
        return exp(log_softmax_rows(logits))
    if params.task == "link":
        raise ParameterError("link task scores node pairs, use decode_pairs")
    raise ParameterError("unknown task %r" % (params.task,))


def decode_logits(params, z):
    """Classification logits (pre-softmax), for cross-entropy training."""
    if params.task != "classify":
        raise ParameterError("decode_logits requires the classify task")
    h = node_embeddings(params, z)
    return matmul(relu(matmul(h, params.weights["dec_w0"])
                       + params.weights["dec_b0"]),
                  params.weights["dec_w1"]) + params.weights["dec_b1"]


def decode_pair_logits(params, z, pairs):
    """Pre-sigmoid link scores for (i, j) index pairs, one column."""
    if params.task != "link":
        raise ParameterError("pair scoring requires the link task")
    h = node_embeddings(params, z)
    idx = np.asarray(pairs, dtype=int)
    if idx.ndim != 2 or idx.shape[1] != 2:
        raise ParameterError("pairs must be (m, 2) index pairs")
    x = concat([take_rows(h, idx[:, 0]), take_rows(h, idx[:, 1])], axis=1)
    hidden = relu(matmul(x, params.weights["dec_w0"]) + params.weights["dec_b0"])
    return matmul(hidden, params.weights["dec_w1"]) + params.weights["dec_b1"]


def decode_pairs(params, z, pairs):
    """Link scores for (i, j) index pairs, in [0, 1], one column."""
    return sigmoid(decode_pair_logits(params, z, pairs))


# ---- checkpoint format -------------------------------------------------


def save_params(params, base_path):
    """Write <base>.json (manifest) and <base>.bin (flat float64 blob)."""
    values = params.values()
    names = sorted(values)
    manifest = {
        "variant": params.variant,
        "shapes": {name: list(values[name].shape) for name in names},
        "seed": params.seed,
        "meta": {
            "n_nodes": params.n_nodes,
            "embed_dim": params.embed_dim,
            "out_dim": params.out_dim,
            "n_layers": params.n_layers,
            "task": params.task,
            "activation": params.activation,
            "direct_cap": params.direct_cap,
            "feature_dim": params.feature_dim,
            "static_dim": params.static_dim,
            "hidden_dim": params.hidden_dim,
            "structure_blind": params.structure_blind,
        },
    }
    with open(base_path + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    blob = np.concatenate([values[name].reshape(-1) for name in names])
    with open(base_path + ".bin", "wb") as fh:
        fh.write(blob.astype("<f8").tobytes())


def load_params(base_path):
    """Rebuild a parameter set from its manifest and blob, bit-exact."""
    with open(base_path + ".json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(base_path + ".bin", "rb") as fh:
        blob = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    meta = manifest["meta"]
    weights = {}
    offset = 0
    for name, shape in manifest["shapes"].items():
        size = int(np.prod(shape)) if shape else 1
        weights[name] = blob[offset:offset + size].reshape(shape)
        offset += size
    if offset != blob.size:
        raise ParameterError("checkpoint blob has %d values, manifest wants %d"
                             % (blob.size, offset))
    return VectorFieldParams(
        variant=manifest["variant"], n_nodes=meta["n_nodes"],
        embed_dim=meta["embed_dim"], out_dim=meta["out_dim"],
        n_layers=meta["n_layers"], task=meta["task"],
        activation=meta["activation"], direct_cap=meta["direct_cap"],
        seed=manifest["seed"], feature_dim=meta["feature_dim"],
        static_dim=meta["static_dim"], hidden_dim=meta["hidden_dim"],
        structure_blind=meta["structure_blind"], weights=weights)
