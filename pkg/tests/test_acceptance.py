"""Acceptance suite: one test per shipping criterion.

Each test prints a single ``[ACCEPT] criterion N (<name>): PASS`` line
with its headline numbers once its assertions hold, and asserts its own
wall-clock budget.  Run with ``pytest tests/test_acceptance.py -v -s``
to see the per-criterion lines as they complete.
"""

import json
import time

import numpy as np
from scipy.linalg import expm

from gncde.autodiff import value_of
from gncde.cli import main as cli_main
from gncde.dyngraph import (
    ChurnParams,
    DatasetConfig,
    DynamicsParams,
    Topology,
    evolve_topology,
    gen_topology,
    generate_dataset,
    initial_states,
    simulate_gene,
    simulate_heat,
)
from gncde.paths import SCHEMES, build_path
from gncde.solver import SolverConfig, integrate, order_check
from gncde.tasks import run_node_attribute_task
from gncde.train import ForwardPlan, TrainConfig, check_gradients, loss_mse
from gncde.vfield import (
    VARIANTS,
    field_approx,
    field_direct,
    fit_fusion_to_direct,
    from_linear,
    init_params,
    normalize_adjacency,
)


def accept(number, name, detail):
    print("[ACCEPT] criterion %d (%s): PASS  %s" % (number, name, detail))


def small_observations(n=6, snaps=5, horizon=2.0, seed=0, topology="random",
                       dynamics="heat", churn=1):
    cfg = DatasetConfig(topology=topology, n_nodes=n, dynamics=dynamics,
                        horizon=horizon, n_snapshots=snaps,
                        churn_events=churn, drop_prob=0.1, add_prob=0.02)
    return generate_dataset(cfg, seed)


# ---- criterion 1: gradient correctness ---------------------------------


def test_criterion_1_gradient_correctness():
    t_start = time.perf_counter()
    obs = small_observations(n=6, snaps=5, horizon=2.0)
    targets = obs.states_stack()
    worst = {}
    for index, variant in enumerate(VARIANTS):
        cfg = TrainConfig(embed_dim=4, n_layers=1, hidden_dim=16,
                          solver_method="rk4", solver_step=2.0 / 20.0,
                          seed=index)
        params = init_params(variant, 6, 4, out_dim=targets.shape[2],
                             n_layers=1, seed=index, hidden_dim=16)
        plan = ForwardPlan(obs, "natural_cubic", cfg,
                           out_dim=targets.shape[2])

        def objective(p):
            return loss_mse(plan.run(p, obs.times), targets)

        max_rel, checked = check_gradients(objective, params, n_coords=50,
                                           h=1e-5, seed=100 + index)
        assert len(checked) == 50
        assert max_rel < 1e-4, (variant, max_rel)
        worst[variant] = max_rel
    elapsed = time.perf_counter() - t_start
    assert elapsed < 60.0
    accept(1, "gradient correctness",
           "max rel err %.2e over %d variants x 50 coords in %.1fs"
           % (max(worst.values()), len(VARIANTS), elapsed))


# ---- criterion 2: solver orders ----------------------------------------


def decay_field(t, z):
    return z * -1.0


def test_criterion_2_solver_orders():
    t_start = time.perf_counter()
    z0 = np.ones((1, 1))
    exact = np.exp(-1.0) * np.ones((1, 1))

    euler_slope = order_check("euler", decay_field, z0, 0.0, 1.0, exact,
                              base_step=0.1)
    assert 0.9 <= euler_slope <= 1.1, euler_slope

    rk4_slope = order_check("rk4", decay_field, z0, 0.0, 1.0, exact,
                            base_step=0.2)
    assert 3.7 <= rk4_slope <= 4.3, rk4_slope

    cfg = SolverConfig(method="dopri5", rtol=1e-6, atol=1e-9)
    out = integrate(decay_field, None, z0, 0.0, [1.0], cfg)
    dopri_err = abs(float(value_of(out.states[-1])[0, 0]) - np.exp(-1.0))
    assert dopri_err < 1e-5, dopri_err

    elapsed = time.perf_counter() - t_start
    assert elapsed < 10.0
    accept(2, "solver orders",
           "euler %.3f, rk4 %.3f, dopri5 err %.1e in %.1fs"
           % (euler_slope, rk4_slope, dopri_err, elapsed))


# ---- criterion 3: interpolation contracts ------------------------------


def test_criterion_3_interpolation_contracts():
    t_start = time.perf_counter()
    obs = small_observations(n=5, snaps=8, horizon=3.0, seed=3, churn=3)
    stacks = obs.adjacency_stack()
    times = obs.times

    knot_worst = 0.0
    for scheme in SCHEMES:
        path = build_path(obs, scheme)
        for k, t in enumerate(times):
            coord = path.to_internal(t) if scheme == "rectilinear" else t
            t_value, adjacency = path.eval(coord)
            knot_worst = max(knot_worst, abs(t_value - t),
                             float(np.max(np.abs(adjacency - stacks[k]))))
    assert knot_worst <= 1e-12, knot_worst

    cubic = build_path(obs, "natural_cubic")
    c2_worst = 0.0
    for t in times[1:-1]:
        _, left = cubic.eval_second_derivative(float(t), "left")
        _, right = cubic.eval_second_derivative(float(t), "right")
        c2_worst = max(c2_worst, float(np.max(np.abs(left - right))))
    assert c2_worst <= 1e-8, c2_worst

    hermite = build_path(obs, "cubic_hermite")
    herm_worst = 0.0
    for k in range(1, len(times)):
        deriv = hermite.eval_derivative(float(times[k]))
        herm_worst = max(
            herm_worst,
            float(np.max(np.abs(deriv.d_adjacency - (stacks[k] - stacks[k - 1])))),
            abs(deriv.d_time_channel - (times[k] - times[k - 1])))
    assert herm_worst <= 1e-10, herm_worst

    rect = build_path(obs, "rectilinear")
    rect_worst = 0.0
    for k in range(len(times) - 1):
        t_value, adjacency = rect.eval(2 * k + 1)
        rect_worst = max(rect_worst, abs(t_value - times[k + 1]),
                         float(np.max(np.abs(adjacency - stacks[k]))))
    assert rect_worst <= 1e-12, rect_worst

    elapsed = time.perf_counter() - t_start
    assert elapsed < 5.0
    accept(3, "interpolation contracts",
           "knot %.1e, C2 %.1e, backward diff %.1e, lead-lag %.1e in %.1fs"
           % (knot_worst, c2_worst, herm_worst, rect_worst, elapsed))


# ---- criterion 4: dynamics oracles -------------------------------------


def test_criterion_4_dynamics_oracles():
    t_start = time.perf_counter()

    chain = np.zeros((3, 3))
    chain[0, 1] = chain[1, 0] = chain[1, 2] = chain[2, 1] = 1.0
    topo = Topology(3, chain)
    timeline = evolve_topology(topo, ChurnParams(), seed=0)
    x0 = np.array([1.0, 0.0, 0.0])
    sampler = simulate_heat(timeline, x0, 1.0, 1.0, rtol=1e-10)
    laplacian = np.diag(topo.degrees()) - topo.adjacency
    heat_err = float(np.max(np.abs(sampler.at(0.5)
                                   - expm(-laplacian * 0.5) @ x0)))
    assert heat_err < 1e-5, heat_err

    base = gen_topology("random", 20, {"p": 0.3}, seed=6)
    churned = evolve_topology(
        base, ChurnParams(drop_prob=0.2, add_prob=0.05,
                          event_times=(1.0, 2.0)), seed=7)
    states0 = initial_states("heat", 20, seed=8)
    heat = simulate_heat(churned, states0, 0.7, 3.0)
    drift = 0.0
    for lo, hi in ((0.0, 0.99), (1.0, 1.99), (2.0, 3.0)):
        totals = [heat.at(t).sum() for t in np.linspace(lo, hi, 7)]
        drift = max(drift, float(np.max(np.abs(np.diff(totals)))))
    assert drift < 1e-8, drift

    empty = Topology(3, np.zeros((3, 3)))
    gene_x0 = np.array([2.0, 0.5, 1.0])
    gene = simulate_gene(evolve_topology(empty, ChurnParams(), seed=0),
                         gene_x0, DynamicsParams(kind="gene", f_exp=1),
                         2.0, rtol=1e-10)
    want = gene_x0 * np.exp(-1.0)
    gene_err = float(np.max(np.abs(gene.at(1.0) - want) / want))
    assert gene_err < 1e-6, gene_err

    elapsed = time.perf_counter() - t_start
    assert elapsed < 10.0
    accept(4, "dynamics oracles",
           "heat expm %.1e, conservation %.1e, gene decay %.1e in %.1fs"
           % (heat_err, drift, gene_err, elapsed))


# ---- criterion 5: fused-form field fit ---------------------------------


def fit_triples(rng, n, d, count):
    triples = []
    for _ in range(count):
        z = rng.uniform(0.5, 1.5, size=(n, d))
        raw = (rng.random((n, n)) < 0.5).astype(float)
        raw = np.triu(raw, 1)
        raw = raw + raw.T
        a_norm = normalize_adjacency(raw)
        da = np.zeros((n, n))
        for i, j in rng.integers(0, n, size=(3, 2)):
            da[i, j] += rng.uniform(-0.3, 0.3)
        triples.append((z, a_norm, da))
    return triples


def test_criterion_5_fused_field_fit():
    t_start = time.perf_counter()
    n, d = 10, 4
    params = init_params("gncde_direct", n, d, n_layers=0, seed=27)
    rng = np.random.default_rng(28)
    weights = dict(params.weights)
    weights["layer_w0"] = rng.uniform(0.2, 0.7, size=(d, d))
    weights["proj_w"] = rng.uniform(-0.03, 0.03, size=(d * d, n * n))
    params = params.with_weights(weights)

    fitted = fit_fusion_to_direct(params, fit_triples(rng, n, d, 80))
    worst = 0.0
    for z, a_norm, da in fit_triples(rng, n, d, 40):
        want = value_of(field_direct(params, z, a_norm, da, 1.0))
        got = value_of(field_approx(fitted, z, a_norm, da))
        rel = np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12)
        worst = max(worst, rel)
    assert worst < 0.1, worst

    elapsed = time.perf_counter() - t_start
    accept(5, "fused-form field fit",
           "held-out rel err %.3f on 40 triples in %.1fs" % (worst, elapsed))


# ---- criterion 6: desk-scale ordering ----------------------------------


def desk_scale_run(topology, dynamics, variant, seed):
    cfg = DatasetConfig(topology=topology, n_nodes=100, dynamics=dynamics,
                        horizon=5.0, n_snapshots=60, churn_events=8,
                        drop_prob=0.15, add_prob=0.005)
    obs = generate_dataset(cfg, 0)
    tcfg = TrainConfig(iterations=500, lr=0.02, eval_every=250, embed_dim=8,
                       n_layers=1, hidden_dim=16, activation="relu",
                       solver_method="euler", solver_step=0.05,
                       extrapolation_mode="hold", seed=seed)
    result = run_node_attribute_task(obs, variant, "natural_cubic", tcfg)
    assert not result.diverged, (topology, dynamics, variant, seed)
    return result.metrics["sum_l1"]


def test_criterion_6_desk_scale_ordering():
    t_start = time.perf_counter()
    seeds = (0, 1, 2)
    report = []
    for topology, dynamics in (("grid", "heat"), ("small_world", "gene")):
        means = {}
        for variant in ("gncde_approx", "gnode", "neural_cde_plain"):
            vals = [desk_scale_run(topology, dynamics, variant, s)
                    for s in seeds]
            means[variant] = float(np.mean(vals))
        assert means["gncde_approx"] < means["gnode"], (topology, means)
        assert means["gncde_approx"] < means["neural_cde_plain"], \
            (topology, means)
        report.append("%s/%s approx %.3f < gnode %.3f, plain %.3f"
                      % (topology, dynamics, means["gncde_approx"],
                         means["gnode"], means["neural_cde_plain"]))
    elapsed = time.perf_counter() - t_start
    assert elapsed < 1800.0
    accept(6, "desk-scale ordering",
           "; ".join(report) + "  in %.0fs" % elapsed)


# ---- criterion 7: masked-training smoke --------------------------------


def test_criterion_7_masked_training_smoke():
    t_start = time.perf_counter()
    cfg = DatasetConfig(topology="small_world", n_nodes=20, dynamics="gene",
                        horizon=3.0, n_snapshots=10, churn_events=2,
                        drop_prob=0.1, add_prob=0.01)
    obs = generate_dataset(cfg, 0)
    tcfg = TrainConfig(iterations=120, lr=0.02, eval_every=60, embed_dim=6,
                       n_layers=1, hidden_dim=16,
                       solver_method="euler", solver_step=0.05,
                       extrapolation_mode="hold",
                       train_count=8, interp_count=1, extrap_count=1, seed=0)

    base = run_node_attribute_task(obs, "gncde_full", "natural_cubic", tcfg)
    assert not base.diverged

    n = obs.n_nodes
    rng = np.random.default_rng(9)
    upper = np.triu(rng.random((8, n, n)) < 0.3, 1)
    missing = upper | upper.transpose(0, 2, 1)
    counts = (~missing).reshape(8, -1).sum(axis=0)
    missing.reshape(8, -1)[:, counts < 2] = False
    off_diag = ~np.eye(n, dtype=bool)
    frac = missing[:, off_diag].mean()
    assert 0.25 < frac < 0.35, frac

    masked = run_node_attribute_task(obs, "gncde_full", "natural_cubic",
                                     tcfg, missing_mask=missing)
    assert not masked.diverged
    for key in ("interp_l1", "extrap_l1", "sum_l1"):
        assert np.isfinite(masked.metrics[key]), key
    ratio = masked.metrics["sum_l1"] / base.metrics["sum_l1"]
    assert masked.metrics["sum_l1"] <= 2.0 * base.metrics["sum_l1"], ratio

    elapsed = time.perf_counter() - t_start
    accept(7, "masked-training smoke",
           "%.0f%% channels masked, sum_l1 ratio %.2fx (cap 2x) in %.1fs"
           % (100 * frac, ratio, elapsed))


# ---- criterion 8: byte determinism -------------------------------------


MICRO_CONFIG = """
[dataset]
topology = grid
n_nodes = 9
dynamics = heat
horizon = 2.0
n_snapshots = 8
churn_events = 1
drop_prob = 0.1
add_prob = 0.02
seed = 0

[model]
variant = gncde_full
scheme = natural_cubic
embed_dim = 4

[solver]
method = rk4
step = 0.1

[train]
iterations = 8
eval_every = 4

[split]
train_count = 6
interp_count = 1
extrap_count = 1
"""


def test_criterion_8_byte_determinism(tmp_path):
    t_start = time.perf_counter()
    cfg_path = tmp_path / "exp.ini"
    cfg_path.write_text(MICRO_CONFIG)

    datasets = []
    for name in ("d1.json", "d2.json"):
        out = tmp_path / name
        assert cli_main(["generate", "--config", str(cfg_path),
                         "--out", str(out)]) == 0
        datasets.append(out)
    assert datasets[0].read_bytes() == datasets[1].read_bytes()

    run_dirs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert cli_main(["train", "--config", str(cfg_path),
                         "--dataset", str(datasets[0]),
                         "--out", str(out)]) == 0
        run_dirs.append(out)
    compared = ("report.json", "curves.csv", "checkpoint.json",
                "checkpoint.bin", "curves.png")
    for fname in compared:
        first = (run_dirs[0] / fname).read_bytes()
        second = (run_dirs[1] / fname).read_bytes()
        assert first == second, fname

    report = json.loads((run_dirs[0] / "report.json").read_text())
    assert report["iterations_run"] == 8

    elapsed = time.perf_counter() - t_start
    accept(8, "byte determinism",
           "dataset + %d train outputs identical across reruns in %.1fs"
           % (len(compared), elapsed))


# ---- criterion 9: structure-blind containment --------------------------


def test_criterion_9_structure_blind_containment():
    t_start = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    for case in range(10):
        n = int(rng.integers(3, 8))
        d = int(rng.integers(2, 6))
        snaps = int(rng.integers(4, 7))
        scheme = SCHEMES[case % len(SCHEMES)]
        obs = small_observations(n=n, snaps=snaps, horizon=1.5,
                                 seed=200 + case, churn=1)
        cfg = TrainConfig(embed_dim=d, n_layers=1,
                          solver_method="rk4", solver_step=1.5 / 15.0,
                          seed=case)
        linear = init_params("gncde_linear", n, d, out_dim=1, n_layers=1,
                             seed=case)
        lifted = from_linear(linear)
        assert lifted.variant == "gncde_full"
        plan = ForwardPlan(obs, scheme, cfg, out_dim=1)
        a = value_of(plan.run(linear, obs.times))
        b = value_of(plan.run(lifted, obs.times))
        gap = float(np.max(np.abs(a - b)))
        worst = max(worst, gap)
    assert worst <= 1e-12, worst

    elapsed = time.perf_counter() - t_start
    accept(9, "structure-blind containment",
           "max trajectory gap %.1e over 10 instances in %.1fs"
           % (worst, elapsed))
