"""Experiment configuration: INI-style documents mapped to run settings.

One document describes one experiment end to end: the dataset to
manufacture, the model and interpolation scheme, the solver, the
training protocol, the split, and output paths.  Defaults reproduce the
reference protocol (400 nodes, 120 snapshots, d=20, one message-passing
layer, natural cubic interpolation, 2000 iterations at lr 0.01, 80/20/20
split).  Every key is optional; unknown sections or keys are errors so
typos surface instead of silently falling back.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

from .dyngraph import DYNAMICS_KINDS, TOPOLOGY_KINDS, DatasetConfig
from .errors import ConfigError
from .paths import EXTRAPOLATION_MODES, SCHEMES
from .solver import METHODS
from .train import TrainConfig
from .vfield import VARIANTS

_SECTIONS = ("dataset", "model", "solver", "train", "split", "grid", "output")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings for one experiment."""

    # dataset
    topology: str = "grid"
    n_nodes: int = 400
    dynamics: str = "heat"
    diffusion_k: float = 1.0
    gene_f_exp: int = 1
    gene_h_exp: float = 2.0
    horizon: float = 25.0
    n_snapshots: int = 120
    churn_events: int = 5
    drop_prob: float = 0.05
    add_prob: float = 0.001
    dataset_seed: int = 0
    # model
    variant: str = "gncde_full"
    scheme: str = "natural_cubic"
    embed_dim: int = 20
    n_layers: int = 1
    direct_cap: int = 20
    hidden_dim: int = 64
    # solver
    method: str = "rk4"
    step: float = None
    rtol: float = 1e-6
    atol: float = 1e-8
    extrapolation_mode: str = "last_slope"
    # train
    iterations: int = 2000
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eval_every: int = 20
    clip_norm: float = 10.0
    loss: str = "mse"
    train_seed: int = 0
    # split (None = proportional 80/20/20)
    train_count: int = None
    interp_count: int = None
    extrap_count: int = None
    # grid
    seeds: tuple = (0,)
    # output
    out_dir: str = "runs"

    def __post_init__(self):
        checks = (
            ("dataset.topology", self.topology, TOPOLOGY_KINDS),
            ("dataset.dynamics", self.dynamics, DYNAMICS_KINDS),
            ("model.variant", self.variant, VARIANTS),
            ("model.scheme", self.scheme, SCHEMES),
            ("solver.method", self.method, METHODS),
            ("solver.extrapolation_mode", self.extrapolation_mode,
             EXTRAPOLATION_MODES),
            ("train.loss", self.loss, ("mse", "l1")),
        )
        for label, value, allowed in checks:
            if value not in allowed:
                raise ConfigError("%s: %r is not one of %s"
                                  % (label, value, ", ".join(allowed)))
        positives = (
            ("dataset.n_nodes", self.n_nodes, 2),
            ("dataset.n_snapshots", self.n_snapshots, 2),
            ("model.embed_dim", self.embed_dim, 1),
            ("model.direct_cap", self.direct_cap, 1),
            ("model.hidden_dim", self.hidden_dim, 1),
            ("train.eval_every", self.eval_every, 1),
        )
        for label, value, low in positives:
            if value < low:
                raise ConfigError("%s: %d is below the minimum %d"
                                  % (label, value, low))
        if self.n_layers < 0:
            raise ConfigError("model.n_layers: must be nonnegative")
        if self.horizon <= 0:
            raise ConfigError("dataset.horizon: must be positive")
        if self.lr <= 0:
            raise ConfigError("train.lr: must be positive")
        if self.iterations < 0:
            raise ConfigError("train.iterations: must be nonnegative")
        if self.step is not None and self.step <= 0:
            raise ConfigError("solver.step: must be positive when given")
        if not self.seeds:
            raise ConfigError("grid.seeds: needs at least one seed")
        counts = (self.train_count, self.interp_count, self.extrap_count)
        given = [c is not None for c in counts]
        if any(given) and not all(given):
            raise ConfigError("split: give all three counts or none")
        if all(given):
            if min(counts) < 0 or counts[0] < 1:
                raise ConfigError("split: counts must be positive")
            if sum(counts) != self.n_snapshots:
                raise ConfigError(
                    "split: counts sum to %d but dataset.n_snapshots is %d"
                    % (sum(counts), self.n_snapshots))

    def dataset_config(self):
        return DatasetConfig(
            topology=self.topology, n_nodes=self.n_nodes,
            dynamics=self.dynamics, diffusion_k=self.diffusion_k,
            gene_f_exp=self.gene_f_exp, gene_h_exp=self.gene_h_exp,
            horizon=self.horizon, n_snapshots=self.n_snapshots,
            churn_events=self.churn_events, drop_prob=self.drop_prob,
            add_prob=self.add_prob)

    def train_config(self, seed=None):
        return TrainConfig(
            iterations=self.iterations, lr=self.lr, beta1=self.beta1,
            beta2=self.beta2, eval_every=self.eval_every,
            clip_norm=self.clip_norm, loss=self.loss,
            embed_dim=self.embed_dim, n_layers=self.n_layers,
            direct_cap=self.direct_cap, hidden_dim=self.hidden_dim,
            solver_method=self.method, solver_step=self.step,
            rtol=self.rtol, atol=self.atol,
            extrapolation_mode=self.extrapolation_mode,
            train_count=self.train_count, interp_count=self.interp_count,
            extrap_count=self.extrap_count,
            seed=self.train_seed if seed is None else seed)


_FIELD_MAP = {
    ("dataset", "topology"): ("topology", str),
    ("dataset", "n_nodes"): ("n_nodes", int),
    ("dataset", "dynamics"): ("dynamics", str),
    ("dataset", "diffusion_k"): ("diffusion_k", float),
    ("dataset", "gene_f_exp"): ("gene_f_exp", int),
    ("dataset", "gene_h_exp"): ("gene_h_exp", float),
    ("dataset", "horizon"): ("horizon", float),
    ("dataset", "n_snapshots"): ("n_snapshots", int),
    ("dataset", "churn_events"): ("churn_events", int),
    ("dataset", "drop_prob"): ("drop_prob", float),
    ("dataset", "add_prob"): ("add_prob", float),
    ("dataset", "seed"): ("dataset_seed", int),
    ("model", "variant"): ("variant", str),
    ("model", "scheme"): ("scheme", str),
    ("model", "embed_dim"): ("embed_dim", int),
    ("model", "n_layers"): ("n_layers", int),
    ("model", "direct_cap"): ("direct_cap", int),
    ("model", "hidden_dim"): ("hidden_dim", int),
    ("solver", "method"): ("method", str),
    ("solver", "step"): ("step", float),
    ("solver", "rtol"): ("rtol", float),
    ("solver", "atol"): ("atol", float),
    ("solver", "extrapolation_mode"): ("extrapolation_mode", str),
    ("train", "iterations"): ("iterations", int),
    ("train", "lr"): ("lr", float),
    ("train", "beta1"): ("beta1", float),
    ("train", "beta2"): ("beta2", float),
    ("train", "eval_every"): ("eval_every", int),
    ("train", "clip_norm"): ("clip_norm", float),
    ("train", "loss"): ("loss", str),
    ("train", "seed"): ("train_seed", int),
    ("split", "train_count"): ("train_count", int),
    ("split", "interp_count"): ("interp_count", int),
    ("split", "extrap_count"): ("extrap_count", int),
    ("output", "out_dir"): ("out_dir", str),
}


def parse_config(text):
    """Parse one INI document into an ExperimentConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError("config does not parse: %s" % (err,))
    overrides = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError("unknown section [%s]; expected one of %s"
                              % (section, ", ".join(_SECTIONS)))
        for key, raw in parser.items(section):
            if section == "grid" and key == "seeds":
                overrides["seeds"] = _parse_seeds(raw)
                continue
            spec = _FIELD_MAP.get((section, key))
            if spec is None:
                raise ConfigError("unknown key %s.%s" % (section, key))
            name, cast = spec
            try:
                overrides[name] = cast(raw)
            except ValueError:
                raise ConfigError("%s.%s: %r is not a valid %s"
                                  % (section, key, raw, cast.__name__))
    try:
        return ExperimentConfig(**overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err))


def _parse_seeds(raw):
    parts = raw.replace(",", " ").split()
    if not parts:
        raise ConfigError("grid.seeds: empty seed list")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError("grid.seeds: %r is not a list of integers" % (raw,))


def load_config(path):
    """Read and parse a config file; missing files surface as IO errors."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config_text():
    """The full schema with every default, as a ready-to-edit document."""
    cfg = ExperimentConfig()
    doc = configparser.ConfigParser()
    for (section, key), (name, _) in _FIELD_MAP.items():
        value = getattr(cfg, name)
        if value is None:
            continue
        if not doc.has_section(section):
            doc.add_section(section)
        doc.set(section, key, str(value))
    doc.add_section("grid")
    doc.set("grid", "seeds", " ".join(str(s) for s in cfg.seeds))
    out = io.StringIO()
    doc.write(out)
    return out.getvalue()
