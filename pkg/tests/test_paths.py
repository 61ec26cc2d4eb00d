"""Interpolation schemes: knot exactness, derivatives, lead-lag, masking."""

import numpy as np
import pytest

from gncde.dyngraph import (
    ChurnParams,
    DatasetConfig,
    DynamicGraphObservations,
    TimedAdjacency,
    Topology,
    evolve_topology,
    gen_topology,
    generate_dataset,
    sample_observations,
    simulate_heat,
)
from gncde.errors import ParameterError, RangeError
from gncde.paths import (
    SCHEMES,
    build_channel_path,
    build_path,
    extend_path,
    mask_missing,
)


def observations_from_stacks(times, adjacencies):
    snaps = tuple(TimedAdjacency(float(t), Topology(adjacencies[k].shape[0], adjacencies[k]))
                  for k, t in enumerate(times))
    return DynamicGraphObservations(snapshots=snaps)


def churned_observations(n=6, n_snaps=9, seed=0, horizon=4.0):
    base = gen_topology("random", n, {"p": 0.5}, seed=seed)
    timeline = evolve_topology(
        base, ChurnParams(drop_prob=0.3, add_prob=0.1,
                          event_times=(1.0, 2.0, 3.0)), seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    times = np.sort(rng.uniform(0, horizon, n_snaps))
    sampler = simulate_heat(timeline, rng.uniform(0, 25, n), 1.0, horizon)
    return sample_observations(timeline, sampler, times)


# ---- construction ------------------------------------------------------


def test_build_rejects_too_few_snapshots():
    obs = churned_observations().subset([0])
    with pytest.raises(ParameterError):
        build_path(obs, "linear")
    two = churned_observations().subset([0, 1])
    with pytest.raises(ParameterError):
        build_path(two, "natural_cubic")
    build_path(two, "linear")  # two knots are enough for linear


def test_build_rejects_unknown_scheme():
    with pytest.raises(ParameterError):
        build_path(churned_observations(), "quadratic")


def test_linear_midpoint_is_average():
    a0 = np.zeros((3, 3))
    a1 = np.zeros((3, 3))
    a1[0, 1] = a1[1, 0] = 1.0
    obs = observations_from_stacks([0.0, 2.0], [a0, a1])
    path = build_path(obs, "linear")
    t_value, adjacency = path.eval(1.0)
    assert t_value == pytest.approx(1.0)
    assert np.allclose(adjacency, (a0 + a1) / 2)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_knot_exactness(scheme):
    obs = churned_observations(n=5, n_snaps=8, seed=3)
    path = build_path(obs, scheme)
    stacks = obs.adjacency_stack()
    for k, t in enumerate(obs.times):
        coord = path.to_internal(t) if scheme == "rectilinear" else t
        t_value, adjacency = path.eval(coord)
        assert abs(t_value - t) <= 1e-12
        assert np.max(np.abs(adjacency - stacks[k])) <= 1e-12


@pytest.mark.parametrize("scheme", SCHEMES)
def test_eval_outside_domain_raises(scheme):
    path = build_path(churned_observations(), scheme)
    lo, hi = path.domain
    with pytest.raises(RangeError):
        path.eval(lo - 0.5)
    with pytest.raises(RangeError):
        path.eval(hi + 0.5)


# ---- derivatives -------------------------------------------------------


def test_linear_derivative_is_segment_slope():
    obs = churned_observations(n=4, n_snaps=6, seed=5)
    path = build_path(obs, "linear")
    times = obs.times
    stacks = obs.adjacency_stack()
    k = 2
    t_mid = 0.5 * (times[k] + times[k + 1])
    deriv = path.eval_derivative(t_mid)
    want = (stacks[k + 1] - stacks[k]) / (times[k + 1] - times[k])
    assert np.allclose(deriv.d_adjacency, want)
    assert deriv.d_time_channel == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_constant_adjacency_has_zero_derivative(scheme):
    a = gen_topology("grid", 4).adjacency
    obs = observations_from_stacks([0.0, 1.0, 2.5, 4.0], [a, a, a, a])
    path = build_path(obs, scheme)
    lo, hi = path.domain
    for t in np.linspace(lo + 0.1, hi - 0.1, 7):
        assert np.all(path.eval_derivative(t).d_adjacency == 0.0)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_derivative_matches_central_differences(scheme):
    obs = churned_observations(n=5, n_snaps=9, seed=8)
    path = build_path(obs, scheme)
    lo, hi = path.domain
    rng = np.random.default_rng(0)
    h = 1e-6
    points = rng.uniform(lo + 0.01, hi - 0.01, 100)
    if scheme in ("linear", "rectilinear"):
        # Piecewise rules break across knots; keep clear of them.
        knots = path.internal_knots
        points = np.array([p for p in points
                           if np.min(np.abs(knots - p)) > 1e-3])
    for t in points:
        deriv = path.eval_derivative(t)
        _, up = path.eval(t + h)
        _, down = path.eval(t - h)
        fd = (up - down) / (2 * h)
        err = np.max(np.abs(deriv.d_adjacency - fd) / (1.0 + np.abs(deriv.d_adjacency)))
        assert err < 1e-4


def test_time_channel_derivative_near_one():
    obs = churned_observations(n=4, n_snaps=8, seed=9)
    for scheme in ("linear", "natural_cubic"):
        path = build_path(obs, scheme)
        lo, hi = path.domain
        for t in np.linspace(lo + 0.05, hi - 0.05, 11):
            assert path.eval_derivative(t).d_time_channel == pytest.approx(1.0, abs=1e-6)


def test_natural_cubic_reproduces_cubic_polynomial_derivative():
    # A natural spline reproduces a cubic away from the boundary, where the
    # natural end conditions disagree with the polynomial; the mismatch
    # decays geometrically into the interior, so check the middle third.
    times = np.linspace(0.0, 6.0, 61)
    poly = lambda t: 0.1 * t ** 3 - 0.4 * t ** 2 + t - 2.0
    dpoly = lambda t: 0.3 * t ** 2 - 0.8 * t + 1.0
    channel = build_channel_path(times, poly(times).reshape(-1, 1), "natural_cubic")
    rng = np.random.default_rng(1)
    for t in rng.uniform(2.0, 4.0, 50):
        got = channel.eval_derivative(t)[0]
        assert abs(got - dpoly(t)) < 1e-8


# ---- natural cubic smoothness -----------------------------------------


def test_natural_cubic_boundary_second_derivative_zero():
    obs = churned_observations(n=4, n_snaps=5, seed=11)
    path = build_path(obs, "natural_cubic")
    lo, hi = path.domain
    for t, side in ((lo, "right"), (hi, "left")):
        _, dd = path.eval_second_derivative(t, side)
        assert np.max(np.abs(dd)) <= 1e-10


def test_natural_cubic_c2_at_interior_knots():
    obs = churned_observations(n=4, n_snaps=7, seed=12)
    path = build_path(obs, "natural_cubic")
    for t in obs.times[1:-1]:
        _, left = path.eval_second_derivative(float(t), "left")
        _, right = path.eval_second_derivative(float(t), "right")
        assert np.max(np.abs(left - right)) <= 1e-8


def test_natural_cubic_first_derivative_continuous_at_knots():
    obs = churned_observations(n=4, n_snaps=7, seed=13)
    path = build_path(obs, "natural_cubic")
    eps = 1e-7
    for t in obs.times[1:-1]:
        left = path.eval_derivative(float(t) - eps).d_adjacency
        right = path.eval_derivative(float(t) + eps).d_adjacency
        assert np.max(np.abs(left - right)) < 1e-5


# ---- cubic hermite -----------------------------------------------------


def test_hermite_knot_derivative_is_backward_difference():
    obs = churned_observations(n=5, n_snaps=8, seed=14)
    path = build_path(obs, "cubic_hermite")
    stacks = obs.adjacency_stack()
    times = obs.times
    for k in range(1, len(times)):
        deriv = path.eval_derivative(float(times[k]))
        want = stacks[k] - stacks[k - 1]
        assert np.max(np.abs(deriv.d_adjacency - want)) <= 1e-10
        want_t = times[k] - times[k - 1]
        assert abs(deriv.d_time_channel - want_t) <= 1e-10


def test_hermite_first_derivative_continuous():
    obs = churned_observations(n=4, n_snaps=7, seed=15)
    path = build_path(obs, "cubic_hermite")
    eps = 1e-8
    for t in obs.times[1:-1]:
        left = path.eval_derivative(float(t) - eps).d_adjacency
        at = path.eval_derivative(float(t)).d_adjacency
        assert np.max(np.abs(left - at)) < 1e-6


# ---- rectilinear -------------------------------------------------------


def test_rectilinear_domain_length():
    obs = churned_observations(n=4, n_snaps=9, seed=16)
    path = build_path(obs, "rectilinear")
    n_knots = len(obs.snapshots)
    assert path.domain == (0.0, 2.0 * (n_knots - 1))


def test_rectilinear_odd_points_hold_previous_structure():
    obs = churned_observations(n=5, n_snaps=7, seed=17)
    path = build_path(obs, "rectilinear")
    stacks = obs.adjacency_stack()
    times = obs.times
    for k in range(len(times) - 1):
        t_value, adjacency = path.eval(2 * k + 1)
        assert t_value == pytest.approx(times[k + 1], abs=1e-12)
        assert np.max(np.abs(adjacency - stacks[k])) <= 1e-12


def test_rectilinear_lead_and_lag_segments():
    obs = churned_observations(n=4, n_snaps=6, seed=18)
    path = build_path(obs, "rectilinear")
    stacks = obs.adjacency_stack()
    times = obs.times
    # Lead segment [0, 1]: time advances, structure frozen.
    t_value, adjacency = path.eval(0.5)
    assert np.allclose(adjacency, stacks[0])
    assert t_value == pytest.approx(0.5 * (times[0] + times[1]))
    deriv = path.eval_derivative(0.5)
    assert np.all(deriv.d_adjacency == 0.0)
    assert deriv.d_time_channel == pytest.approx(times[1] - times[0])
    # Lag segment [1, 2]: time frozen, structure advances.
    t_value, adjacency = path.eval(1.5)
    assert t_value == pytest.approx(times[1])
    assert np.allclose(adjacency, 0.5 * (stacks[0] + stacks[1]))
    deriv = path.eval_derivative(1.5)
    assert deriv.d_time_channel == pytest.approx(0.0)


def test_to_internal_maps_knots_to_even_integers():
    obs = churned_observations(n=4, n_snaps=6, seed=19)
    path = build_path(obs, "rectilinear")
    for k, t in enumerate(obs.times):
        assert path.to_internal(float(t)) == pytest.approx(2.0 * k, abs=1e-12)
    linear = build_path(obs, "linear")
    assert linear.to_internal(1.23) == 1.23


# ---- per-channel independence -----------------------------------------


@pytest.mark.parametrize("scheme", ["linear", "natural_cubic"])
def test_node_permutation_commutes_with_build(scheme):
    obs = churned_observations(n=5, n_snaps=7, seed=20)
    perm = np.array([3, 0, 4, 1, 2])
    permuted = observations_from_stacks(
        obs.times, [a[np.ix_(perm, perm)] for a in obs.adjacency_stack()])
    path = build_path(obs, scheme)
    path_p = build_path(permuted, scheme)
    for t in np.linspace(obs.times[0] + 0.1, obs.times[-1] - 0.1, 5):
        _, a = path.eval(t)
        _, a_p = path_p.eval(t)
        assert np.allclose(a[np.ix_(perm, perm)], a_p, atol=1e-14)


# ---- masking -----------------------------------------------------------


def test_empty_mask_identical_path():
    obs = churned_observations(n=4, n_snaps=6, seed=21)
    masked = mask_missing(obs, np.zeros((6, 4, 4), dtype=bool))
    a = build_path(obs, "natural_cubic")
    b = build_path(masked, "natural_cubic")
    for t in np.linspace(obs.times[0], obs.times[-1], 9):
        _, va = a.eval(t)
        _, vb = b.eval(t)
        assert np.array_equal(va, vb)


def test_mask_middle_knot_line_through_gap():
    a0 = np.zeros((2, 2))
    a1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    obs = observations_from_stacks([0.0, 1.0, 2.0], [a0, a0, a1])
    missing = np.zeros((3, 2, 2), dtype=bool)
    missing[1, 0, 1] = True
    missing[1, 1, 0] = True
    masked = mask_missing(obs, missing)
    path = build_path(masked, "linear")
    # The masked channel interpolates straight from t=0 to t=2.
    _, adjacency = path.eval(1.0)
    assert adjacency[0, 1] == pytest.approx(0.5)


def test_mask_keeps_observed_knots_exact():
    obs = churned_observations(n=5, n_snaps=10, seed=22)
    rng = np.random.default_rng(7)
    missing = rng.random((10, 5, 5)) < 0.3
    missing = missing | missing.transpose(0, 2, 1)  # symmetric masking
    counts = (~missing).sum(axis=0)
    missing[:, counts < 2] = False  # keep every channel viable
    masked = mask_missing(obs, missing)
    path = build_path(masked, "natural_cubic")
    stacks = obs.adjacency_stack()
    for k, t in enumerate(obs.times):
        _, adjacency = path.eval(float(t))
        observed = ~missing[k]
        assert np.max(np.abs((adjacency - stacks[k])[observed])) <= 1e-12


def test_mask_leading_knots_hold_first_observation():
    a0 = np.zeros((2, 2))
    a1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    obs = observations_from_stacks([0.0, 1.0, 2.0, 3.0], [a0, a1, a1, a0])
    missing = np.zeros((4, 2, 2), dtype=bool)
    missing[0] = True  # first snapshot entirely unobserved
    masked = mask_missing(obs, missing)
    path = build_path(masked, "linear")
    _, adjacency = path.eval(0.0)
    assert adjacency[0, 1] == pytest.approx(1.0)  # held from t=1 backward
    assert np.all(path.eval_derivative(0.5).d_adjacency == 0.0)


def test_mask_starved_channel_rejected():
    obs = churned_observations(n=3, n_snaps=4, seed=23)
    missing = np.zeros((4, 3, 3), dtype=bool)
    missing[:3, 0, 1] = True  # channel keeps only one observation
    with pytest.raises(ParameterError):
        mask_missing(obs, missing)


def test_mask_shape_validated():
    obs = churned_observations(n=3, n_snaps=4, seed=24)
    with pytest.raises(ParameterError):
        mask_missing(obs, np.zeros((4, 2, 2), dtype=bool))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_masked_build_supported_by_all_schemes(scheme):
    obs = churned_observations(n=4, n_snaps=8, seed=25)
    rng = np.random.default_rng(9)
    missing = rng.random((8, 4, 4)) < 0.25
    missing = missing | missing.transpose(0, 2, 1)
    counts = (~missing).sum(axis=0)
    missing[:, counts < 2] = False
    masked = mask_missing(obs, missing)
    path = build_path(masked, scheme)
    lo, hi = path.domain
    for t in np.linspace(lo, hi, 7):
        t_value, adjacency = path.eval(t)
        assert np.all(np.isfinite(adjacency))


# ---- extrapolation wrappers -------------------------------------------


def test_extend_hold_keeps_terminal_value():
    obs = churned_observations(n=4, n_snaps=6, seed=26)
    path = build_path(obs, "natural_cubic")
    extended = extend_path(path, "hold")
    t_end = path.domain[1]
    _, terminal = path.eval(t_end)
    t_value, adjacency = extended.eval(t_end + 3.0)
    assert np.array_equal(adjacency, terminal)
    assert t_value == pytest.approx(t_end)
    deriv = extended.eval_derivative(t_end + 3.0)
    assert deriv.d_time_channel == 0.0
    assert np.all(deriv.d_adjacency == 0.0)


def test_extend_last_slope_continues_linearly():
    obs = churned_observations(n=4, n_snaps=6, seed=27)
    path = build_path(obs, "natural_cubic")
    extended = extend_path(path, "last_slope")
    t_end = path.domain[1]
    slope = path.eval_derivative(t_end)
    _, terminal = path.eval(t_end)
    dt = 0.7
    t_value, adjacency = extended.eval(t_end + dt)
    assert np.allclose(adjacency, terminal + slope.d_adjacency * dt)
    deriv = extended.eval_derivative(t_end + dt)
    assert np.array_equal(deriv.d_adjacency, slope.d_adjacency)
    # Inside the domain the wrapper defers to the path.
    t_in = 0.5 * (path.domain[0] + t_end)
    assert extended.eval(t_in)[0] == path.eval(t_in)[0]


def test_extend_last_slope_rectilinear_advances_time_only():
    obs = churned_observations(n=4, n_snaps=6, seed=28)
    path = build_path(obs, "rectilinear")
    extended = extend_path(path, "last_slope")
    u_end = path.domain[1]
    deriv = extended.eval_derivative(u_end + 1.0)
    assert deriv.d_time_channel == pytest.approx(obs.times[-1] - obs.times[-2])
    assert np.all(deriv.d_adjacency == 0.0)
    # to_internal of an extrapolation time lands beyond the internal domain
    # where the time channel keeps advancing at that rate.
    t_query = obs.times[-1] + 0.5
    u_query = path.to_internal(float(t_query))
    assert u_query > u_end
    t_value, _ = extended.eval(u_query)
    assert t_value == pytest.approx(t_query, abs=1e-9)


def test_extend_rejects_unknown_mode():
    path = build_path(churned_observations(), "linear")
    with pytest.raises(ParameterError):
        extend_path(path, "mirror")


# ---- storage shortcut --------------------------------------------------


def test_constant_channels_stored_once():
    # Under sparse churn most channels never change; the path should carry
    # far fewer interpolated channels than n*n.
    cfg = DatasetConfig(topology="grid", n_nodes=25, dynamics="heat",
                        horizon=4.0, n_snapshots=12, churn_events=2,
                        drop_prob=0.05, add_prob=0.001)
    obs = generate_dataset(cfg, seed=2)
    path = build_path(obs, "natural_cubic")
    interpolated = sum(g.channel_idx.size for g in path._core.groups)
    assert interpolated < 0.2 * (25 * 25)
    assert path._core.const_idx.size > 0.8 * (25 * 25)
