"""Command-line front end: generate, train, grid, surface.

Exit codes are a stable contract: 0 success, 2 configuration error,
3 IO failure, 4 numerical divergence.  The GNCDE_THREADS environment
variable caps BLAS parallelism; it must act before numpy first loads,
which is why the cap runs ahead of every other import here.
"""

from __future__ import annotations

import os


def _cap_threads():
    cap = os.environ.get("GNCDE_THREADS")
    if not cap:
        return
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
                 "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(name, cap)


_cap_threads()

import argparse          # noqa: E402
import concurrent.futures  # noqa: E402
import glob              # noqa: E402
import sys               # noqa: E402

import numpy as np       # noqa: E402

from . import figures    # noqa: E402
from .autodiff import value_of                     # noqa: E402
from .config import load_config                    # noqa: E402
from .dyngraph import (                            # noqa: E402
    DatasetConfig,
    build_dataset_components,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .errors import (                              # noqa: E402
    ConfigError,
    NumericalError,
    ParameterError,
    RangeError,
)
from .tasks import (                               # noqa: E402
    SplitSpec,
    append_result_row,
    result_row,
    run_node_attribute_task,
    split,
)
from .train import (                               # noqa: E402
    ForwardPlan,
    proportional_counts,
    train,
    write_curves_csv,
    write_report_json,
    write_timing_json,
)
from .vfield import load_params, save_params       # noqa: E402

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4


# ---- generate ----------------------------------------------------------


def cmd_generate(args):
    cfg = load_config(args.config)
    seed = cfg.dataset_seed if args.seed is None else args.seed
    dataset_cfg = cfg.dataset_config()
    obs = generate_dataset(dataset_cfg, seed)
    save_dataset(obs, dataset_cfg.to_dict(), seed, args.out)

    edges = [s.topology.n_edges for s in obs.snapshots]
    states = obs.states_stack()
    print("[GENERATE] wrote %s" % args.out)
    print("[GENERATE] topology=%s dynamics=%s seed=%d"
          % (cfg.topology, cfg.dynamics, seed))
    print("[GENERATE] nodes=%d snapshots=%d horizon=%.6g"
          % (obs.n_nodes, len(obs.snapshots), cfg.horizon))
    print("[GENERATE] edges first=%d last=%d min=%d max=%d"
          % (edges[0], edges[-1], min(edges), max(edges)))
    print("[GENERATE] state range [%.6g, %.6g] mean %.6g"
          % (states.min(), states.max(), states.mean()))
    return EXIT_OK


# ---- train -------------------------------------------------------------


def _check_compatible(cfg, obs):
    if obs.n_nodes != cfg.n_nodes:
        raise ConfigError("dataset has %d nodes but config says %d"
                          % (obs.n_nodes, cfg.n_nodes))
    if len(obs.snapshots) != cfg.n_snapshots:
        raise ConfigError("dataset has %d snapshots but config says %d"
                          % (len(obs.snapshots), cfg.n_snapshots))


def cmd_train(args):
    cfg = load_config(args.config)
    obs, _, _ = load_dataset(args.dataset)
    _check_compatible(cfg, obs)
    tcfg = cfg.train_config(args.seed)

    report = train(obs, cfg.variant, cfg.scheme, tcfg)

    os.makedirs(args.out, exist_ok=True)
    write_report_json(report, os.path.join(args.out, "report.json"))
    write_timing_json(report, os.path.join(args.out, "timing.json"))
    write_curves_csv(report, os.path.join(args.out, "curves.csv"))
    save_params(report.final_params, os.path.join(args.out, "checkpoint"))
    figures.render_curves(report, os.path.join(args.out, "curves.png"))

    final = report.evals[-1]
    print("[TRAIN] variant=%s scheme=%s seed=%d iterations=%d"
          % (cfg.variant, cfg.scheme, tcfg.seed, len(report.train_losses)))
    print("[TRAIN] interp_l1=%.6g extrap_l1=%.6g sum_l1=%.6g"
          % (final["interp_l1"], final["extrap_l1"], final["sum_l1"]))
    print("[TRAIN] outputs in %s" % args.out)
    if report.diverged:
        print("[TRAIN] DIVERGED: %s" % report.divergence_message,
              file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


# ---- grid --------------------------------------------------------------

AGGREGATE_COLUMNS = ("task", "dynamics", "topology", "variant", "scheme",
                     "seeds", "runs", "mean_interp_l1", "std_interp_l1",
                     "mean_extrap_l1", "std_extrap_l1", "mean_sum_l1",
                     "std_sum_l1", "failed_seeds", "wall_seconds")


def _grid_one_run(config_path, seed):
    """One (config, seed) cell: returns (per-run row dict, sum_l1 or None)."""
    cfg = load_config(config_path)
    dataset_cfg = cfg.dataset_config()
    obs = generate_dataset(dataset_cfg, cfg.dataset_seed)
    tcfg = cfg.train_config(seed)
    result = run_node_attribute_task((obs, dataset_cfg.to_dict(),
                                      cfg.dataset_seed),
                                     cfg.variant, cfg.scheme, tcfg)
    row = result_row(result, dynamics=cfg.dynamics, topology=cfg.topology)
    if result.diverged:
        return row, None
    return row, result.metrics


def _aggregate(cfg, rows_and_metrics):
    """Aggregate one config's (row, metrics) outcomes, seed-aligned."""
    interp = [m["interp_l1"] for _, m in rows_and_metrics if m is not None]
    extrap = [m["extrap_l1"] for _, m in rows_and_metrics if m is not None]
    sums = [m["sum_l1"] for _, m in rows_and_metrics if m is not None]
    failed = [str(seed) for seed, (_, m) in zip(cfg.seeds, rows_and_metrics)
              if m is None]
    wall = sum(float(row["wall_seconds"]) for row, _ in rows_and_metrics
               if row is not None)

    def stat(values, reducer):
        if not values:
            return ""
        return "%.12g" % reducer(np.asarray(values, dtype=float))

    return {
        "task": "attributes",
        "dynamics": cfg.dynamics,
        "topology": cfg.topology,
        "variant": cfg.variant,
        "scheme": cfg.scheme,
        "seeds": ";".join(str(s) for s in cfg.seeds),
        "runs": str(len(sums)),
        "mean_interp_l1": stat(interp, np.mean),
        "std_interp_l1": stat(interp, np.std),
        "mean_extrap_l1": stat(extrap, np.mean),
        "std_extrap_l1": stat(extrap, np.std),
        "mean_sum_l1": stat(sums, np.mean),
        "std_sum_l1": stat(sums, np.std),
        "failed_seeds": ";".join(failed),
        "wall_seconds": "%.3f" % wall,
    }


def cmd_grid(args):
    config_paths = sorted(glob.glob(os.path.join(args.config, "*.ini")))
    if not config_paths:
        raise ConfigError("no *.ini configs found in %s" % args.config)

    cells = []
    for path in config_paths:
        cfg = load_config(path)
        cells.append((path, cfg))

    jobs = []
    for path, cfg in cells:
        for seed in cfg.seeds:
            jobs.append((path, seed))

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            outcomes = list(pool.map(_grid_worker, jobs))
    else:
        outcomes = [_grid_worker(job) for job in jobs]

    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    runs_csv = os.path.splitext(args.out)[0] + "_runs.csv"
    if os.path.exists(runs_csv):
        os.remove(runs_csv)

    agg_rows = []
    cursor = 0
    for path, cfg in cells:
        block = outcomes[cursor:cursor + len(cfg.seeds)]
        cursor += len(cfg.seeds)
        for row, _ in block:
            if row is not None:
                append_result_row(runs_csv, row)
        agg_rows.append(_aggregate(cfg, block))

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for row in agg_rows:
            fh.write(",".join(row[c] for c in AGGREGATE_COLUMNS) + "\n")
    figures.render_grid_summary(agg_rows,
                                os.path.splitext(args.out)[0] + ".png")

    print("[GRID] configs=%d runs=%d -> %s"
          % (len(cells), len(jobs), args.out))
    for row in agg_rows:
        print("[GRID] %s/%s %s: mean_sum_l1=%s std=%s failed=[%s]"
              % (row["topology"], row["dynamics"], row["variant"],
                 row["mean_sum_l1"] or "n/a", row["std_sum_l1"] or "n/a",
                 row["failed_seeds"]))
    return EXIT_OK


def _grid_worker(job):
    """Run one grid cell; failures are flagged, never fatal to the grid."""
    path, seed = job
    try:
        return _grid_one_run(path, seed)
    except (NumericalError, ParameterError, ConfigError) as err:
        print("[GRID] run failed (%s, seed %d): %s" % (path, seed, err),
              file=sys.stderr)
        return None, None


# ---- surface -----------------------------------------------------------


def _surface_times(spec, obs):
    if spec == "knots":
        return np.asarray(obs.times, dtype=float)
    try:
        count = int(spec)
    except ValueError:
        raise ConfigError("--times must be 'knots' or an integer count")
    if count < 2:
        raise ConfigError("--times needs at least 2 samples")
    return np.linspace(float(obs.times[0]), float(obs.times[-1]), count)


def _surface_truth(times, obs, generator_config, dataset_seed):
    """True states at arbitrary times: knots from data, otherwise re-simulated."""
    knots = np.asarray(obs.times, dtype=float)
    states = obs.states_stack()[:, :, 0]
    sampler = None
    rows = np.empty((len(times), obs.n_nodes))
    for i, t in enumerate(times):
        j = int(np.argmin(np.abs(knots - t)))
        if abs(knots[j] - t) <= 1e-9 * max(1.0, abs(t)):
            rows[i] = states[j]
            continue
        if sampler is None:
            if generator_config is None or dataset_seed is None:
                raise ConfigError(
                    "dataset carries no generator settings; only "
                    "--times knots can be rendered")
            _, sampler, _ = build_dataset_components(
                DatasetConfig.from_dict(generator_config), int(dataset_seed))
        rows[i] = sampler.at(float(t))
    return rows


def cmd_surface(args):
    cfg = load_config(args.config)
    obs, generator_config, dataset_seed = load_dataset(args.dataset)
    _check_compatible(cfg, obs)
    params = load_params(args.checkpoint)
    if params.variant != cfg.variant:
        raise ConfigError("checkpoint variant %r does not match config %r"
                          % (params.variant, cfg.variant))
    if params.n_nodes != obs.n_nodes:
        raise ConfigError("checkpoint built for n=%d but dataset has n=%d"
                          % (params.n_nodes, obs.n_nodes))

    times = _surface_times(args.times, obs)
    truth = _surface_truth(times, obs, generator_config, dataset_seed)

    tcfg = cfg.train_config()
    if tcfg.train_count is not None:
        spec = SplitSpec(tcfg.train_count, tcfg.interp_count,
                         tcfg.extrap_count)
    else:
        spec = SplitSpec(*proportional_counts(len(obs.snapshots)))
    train_obs, _, _ = split(obs, spec, tcfg.seed)
    out_dim = obs.states_stack().shape[2]
    plan = ForwardPlan(train_obs, cfg.scheme, tcfg, out_dim=out_dim)
    preds = value_of(plan.run(params, times))[:, :, 0]

    if args.node_order == "initial":
        display = np.argsort(truth[0], kind="stable")
    else:
        display = np.arange(obs.n_nodes)

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("time,node,true_value,predicted_value\n")
        for i, t in enumerate(times):
            for node in display:
                fh.write("%.12g,%d,%.12g,%.12g\n"
                         % (t, node, truth[i, node], preds[i, node]))
    figures.render_surface(times, display, truth[:, display],
                           preds[:, display],
                           os.path.splitext(args.out)[0] + ".png")

    gap = float(np.mean(np.abs(truth - preds)))
    print("[SURFACE] times=%d nodes=%d -> %s"
          % (len(times), obs.n_nodes, args.out))
    print("[SURFACE] mean |true - predicted| = %.6g" % gap)
    return EXIT_OK


# ---- entry point -------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gncde",
        description="Dynamic-graph CDE experiments: generate datasets, "
                    "train models, run grids, export surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="manufacture a dataset file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="run every config in a directory")
    p.add_argument("--config", required=True,
                   help="directory of *.ini experiment configs")
    p.add_argument("--out", required=True, help="aggregate CSV path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("surface",
                       help="export (time, node, true, predicted) samples")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint base path (without .json/.bin)")
    p.add_argument("--out", required=True)
    p.add_argument("--times", default="knots",
                   help="'knots' or a uniform sample count")
    p.add_argument("--node-order", choices=("index", "initial"),
                   default="index")
    p.set_defaults(func=cmd_surface)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError, RangeError, ValueError) as err:
        print("[ERROR] %s" % err, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print("[ERROR] %s" % err, file=sys.stderr)
        return EXIT_IO
    except NumericalError as err:
        print("[ERROR] %s" % err, file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
