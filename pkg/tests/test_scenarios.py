"""Generators, regime classifiers, and the contact-loss predictions."""
import numpy as np
import pytest

from densiflock import (
    Domain,
    ModelParams,
    ScenarioSpec,
    classify_chain,
    classify_group,
    classify_three_body,
    init_chain,
    init_group_vs_individual,
    init_random_clusters,
    init_three_body,
    momentum_estimate,
    neighbor_sets_di,
    predict_three_body,
    run_simulation,
    total_momentum,
)
from densiflock.errors import ConfigError


def three_body_spec(beta, gamma, v_c, n=30, delta=2.0, dt=0.01, t_end=None, seed=2):
    return ScenarioSpec(
        scenario="three_body",
        params=ModelParams(
            model="di", N=n + 1, m=3, delta=delta, kappa=1.0, m_policy="constant"
        ),
        domain=Domain.unbounded(),
        dt=dt,
        t_end=3.0 * (n + 1) if t_end is None else t_end,
        sample_every=5,
        seed=seed,
        n_cluster=n,
        beta=beta,
        gamma=gamma,
        v_c=v_c,
    )


# --- generators -----------------------------------------------------------------


def test_random_clusters_shape_and_bias():
    state = init_random_clusters(64, 25.0, seed=0, margin=2.0)
    assert state.n == 64
    assert state.positions.min() >= 2.0 and state.positions.max() <= 23.0
    # First half carries the positive drift; speeds beyond the unbiased cap show it.
    assert np.all(state.velocities[:32, 1] > -1.0)


def test_random_clusters_deterministic_per_seed():
    a = init_random_clusters(16, 25.0, seed=3)
    b = init_random_clusters(16, 25.0, seed=3)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)
    c = init_random_clusters(16, 25.0, seed=4)
    assert not np.array_equal(a.positions, c.positions)


def test_random_clusters_single_particle_gets_no_drift():
    state = init_random_clusters(1, 25.0, seed=0)
    assert np.linalg.norm(state.velocities[0]) <= 1.0


def test_random_clusters_margin_validation():
    with pytest.raises(ConfigError):
        init_random_clusters(8, 10.0, seed=0, margin=5.0)


def test_three_body_layout_and_initial_tables():
    n, beta, gamma, delta = 30, 1.0, 2.0, 2.0
    state = init_three_body(n, beta, gamma, v_c=1.0, delta=delta)
    assert state.n == n + 1
    b, c = n - 1, n
    assert state.positions[b, 0] == beta and state.positions[c, 0] == gamma
    assert np.array_equal(state.velocities[c], [1.0, 0.0])
    assert np.all(state.velocities[:c] == 0.0)

    table = neighbor_sets_di(state.positions, delta, 3)
    # Core and edge member hear the whole cluster; the edge member also hears
    # the intruder; the intruder hears nobody.
    assert len(table.sets[0]) == n
    assert table.contains(b, c) and len(table.sets[b]) == n + 1
    assert len(table.sets[c]) == 0


def test_three_body_zero_velocity_is_static():
    spec = three_body_spec(1.0, 2.0, 0.0, n=10, t_end=1.0)
    record = run_simulation(spec)
    final = record.samples[-1]
    assert np.all(final.state.velocities == 0.0)
    assert np.array_equal(final.state.positions, record.samples[0].state.positions)


def test_three_body_constraint_validation():
    with pytest.raises(ConfigError):
        init_three_body(30, beta=2.5, gamma=3.0, v_c=1.0, delta=2.0)
    with pytest.raises(ConfigError):
        init_three_body(30, beta=1.0, gamma=1.5, v_c=1.0, delta=2.0)
    with pytest.raises(ConfigError):
        init_three_body(30, beta=0.5, gamma=2.6, v_c=1.0, delta=2.0)  # gap too wide


def test_group_shapes_share_momentum_and_differ_in_positions():
    a = init_group_vs_individual("a")
    b = init_group_vs_individual("b")
    for state in (a, b):
        assert state.n == 29
        mom = total_momentum(state)
        assert mom[0] == pytest.approx(0.1)
        assert mom[1] == 0.0
    assert np.array_equal(a.velocities, b.velocities)
    assert not np.array_equal(a.positions, b.positions)


def test_group_shape_geometry():
    a = init_group_vs_individual("a", spacing=1.0)
    # Elongated shape: 14 columns by 2 rows.
    assert len(np.unique(a.positions[:28, 0])) == 14
    assert len(np.unique(a.positions[:28, 1])) == 2
    b = init_group_vs_individual("b", spacing=1.0)
    assert len(np.unique(b.positions[:28, 0])) == 4
    assert len(np.unique(b.positions[:28, 1])) == 7
    # The singleton starts to the right of each lattice, on its midline.
    for state in (a, b):
        assert state.positions[28, 0] > state.positions[:28, 0].max()
        assert state.positions[28, 1] == 0.0


def test_group_shape_divisibility():
    with pytest.raises(ConfigError):
        init_group_vs_individual("b", cluster_size=30)


def test_chain_layout():
    state = init_chain()
    assert state.n == 22
    assert np.all(state.positions[:21, 0] == 0.0)
    spacing = np.diff(np.sort(state.positions[:21, 1]))
    assert np.allclose(spacing, 0.95)
    assert state.positions[21, 1] == 0.0
    assert np.array_equal(state.velocities[21], [-8.0, 0.0])


# --- predictions ------------------------------------------------------------------


def test_predict_reference_triples():
    assert predict_three_body(1.0, 2.0, 2.0, 30, 1.0).regime == "stability"
    assert predict_three_body(1.95, 2.0, 2.0, 30, 1.0).regime == "breaking"
    assert predict_three_body(1.0, 2.0, 2.0, 30, 0.03).regime == "sticking"


def test_predict_edge_geometry_cases():
    # beta = delta/2 with gamma = delta separates the intruder for large N.
    assert predict_three_body(1.0, 2.0, 2.0, 1000, 0.5).regime == "stability"
    # Near-range edge member with matched speed gets scooped out.
    assert predict_three_body(1.99, 2.0, 2.0, 30, 1.0).regime == "breaking"
    assert predict_three_body(1.0, 2.0, 2.0, 30, 0.0).regime == "sticking"


def test_predict_detach_time_ordering():
    result = predict_three_body(1.95, 2.0, 2.0, 30, 1.0)
    assert result.t_b_detach == pytest.approx(1.5)
    assert result.t_c_detach == pytest.approx(1.95)
    assert result.t_b_detach < result.t_c_detach


def test_predict_sticking_boundary_in_intruder_speed():
    # With beta=1, gamma=2, delta=2 the sticking condition caps |v_c| at
    # (delta - (gamma - beta)) / N = 1/30.
    edge = 1.0 / 30
    assert predict_three_body(1.0, 2.0, 2.0, 30, edge).regime == "sticking"
    assert predict_three_body(1.0, 2.0, 2.0, 30, edge * 1.01).regime != "sticking"


def test_momentum_estimate_values():
    # Sticking transfers N |v_c|; tuned to the interaction range it lands there.
    assert momentum_estimate("sticking", 2.0, 30, 2.0 / 30) == pytest.approx(2.0)
    # Escape regimes approach the range as the intruder slows down.
    assert momentum_estimate("stability", 2.0, 30, 1e-9) == pytest.approx(2.0, abs=1e-6)
    assert momentum_estimate("stability", 2.0, 30, 0.0) == 2.0
    with pytest.raises(ValueError):
        momentum_estimate("bogus", 2.0, 30, 1.0)


# --- classification over simulation ------------------------------------------------


@pytest.mark.parametrize(
    "beta,v_c,expected,t_end",
    [(1.0, 1.0, "stability", 30.0), (1.95, 1.0, "breaking", 30.0), (1.0, 0.03, "sticking", None)],
)
def test_classify_matches_prediction(beta, v_c, expected, t_end):
    predicted = predict_three_body(beta, 2.0, 2.0, 30, v_c)
    record = run_simulation(three_body_spec(beta, 2.0, v_c, t_end=t_end))
    result = classify_three_body(record)
    assert predicted.regime == expected
    assert result.regime == expected


def test_classified_motion_stays_on_the_intruder_axis():
    record = run_simulation(three_body_spec(1.0, 2.0, 1.0, t_end=10.0))
    for sample in record.samples:
        assert np.abs(sample.state.velocities[:, 1]).max() < 1e-12


def test_sticking_momentum_tracks_estimate():
    record = run_simulation(three_body_spec(1.0, 2.0, 0.03))
    result = classify_three_body(record)
    est = momentum_estimate("sticking", 2.0, 30, 0.03)
    assert result.regime == "sticking"
    assert 0.5 <= result.final_momentum / est <= 2.0


def test_sticking_cluster_average_approaches_target_monotonically():
    record = run_simulation(three_body_spec(1.0, 2.0, 0.03))
    target = np.array([0.03, 0.0])
    gaps = np.array(
        [
            np.linalg.norm(s.state.velocities[:30].mean(axis=0) - target)
            for s in record.samples
        ]
    )
    # After the initial transient the approach never reverses.
    tail = gaps[5:]
    assert np.all(np.diff(tail) <= 1e-12)


def test_stability_momentum_within_factor_two_when_budget_is_full():
    # The escape estimate assumes the contact budget is about the full range;
    # beta near delta realizes that.
    record = run_simulation(three_body_spec(1.9, 2.0, 1.0, t_end=30.0))
    result = classify_three_body(record)
    est = momentum_estimate(result.regime, 2.0, 30, 1.0)
    assert 0.5 <= result.final_momentum / est <= 2.0


def test_classify_requires_matching_scenario():
    record = run_simulation(
        ScenarioSpec(
            scenario="chain",
            params=ModelParams(model="di", N=22, m=3, delta=2.0, m_policy="constant"),
            domain=Domain.unbounded(),
            dt=0.01,
            t_end=0.0,
            n_cluster=21,
        )
    )
    with pytest.raises(ValueError):
        classify_three_body(record)


def chain_spec(delta, t_end=30.0, spacing=None):
    return ScenarioSpec(
        scenario="chain",
        params=ModelParams(
            model="di", N=22, m=3, delta=float(delta), kappa=1.0, m_policy="constant"
        ),
        domain=Domain.unbounded(),
        dt=0.01,
        t_end=t_end,
        sample_every=10,
        n_cluster=21,
        spacing=spacing,
    )


def test_chain_narrow_range_splits():
    result = classify_chain(run_simulation(chain_spec(2)))
    assert result.split
    assert result.final_clusters > result.initial_clusters


def test_chain_wide_range_pushes_whole_cluster():
    result = classify_chain(run_simulation(chain_spec(4)))
    assert not result.split
    assert result.regime == "push"
    assert result.chain_vx_final < 0
    assert result.single_vx_final < 0


def group_spec(shape, spacing=1.0, model="di", t_end=30.0):
    if model == "di":
        params = ModelParams(model="di", N=29, m=3, delta=2.0, kappa=1.0)
    else:
        params = ModelParams(model=model, N=29, kappa=1.0)
    return ScenarioSpec(
        scenario="group_vs_individual",
        params=params,
        domain=Domain.unbounded(),
        dt=0.01,
        t_end=t_end,
        sample_every=10,
        n_cluster=28,
        shape=shape,
        spacing=spacing,
    )


def test_group_momentum_flip_depends_on_shape():
    flipped = classify_group(run_simulation(group_spec("a")))
    held = classify_group(run_simulation(group_spec("b")))
    assert flipped.momentum_flipped
    assert not held.momentum_flipped


def test_group_cs_conserves_momentum_in_both_shapes():
    for shape in ("a", "b"):
        record = run_simulation(group_spec(shape, model="cs"))
        mom = record.momentum_series()
        assert np.abs(mom - mom[0]).max() < 1e-10
