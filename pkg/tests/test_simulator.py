import numpy as np
import pytest
from numpy.testing import assert_allclose

from urnrates.model import InitialProfile, Schedule, TruncatedState
from urnrates.oracle import enumerate_exact
from urnrates.simulator import (
    TubeQuery,
    estimate_tube_probability,
    run,
    run_ensemble_paths,
    run_ensemble_terminal,
    step_probabilities,
    sup_l1_distance,
)

CLASSICAL = Schedule.constant(0.0, 1.0)
SEED2 = (2, 0, 0, 0)


def test_step_probabilities_two_empty_urns():
    st = TruncatedState(n=10, j=0, counts=SEED2, urn_total=2, ball_total=0)
    probs = step_probabilities(st, CLASSICAL)
    # only empty urns exist, so the ball lands in one with certainty
    assert_allclose(probs, [1.0, 0.0, 0.0, 0.0], atol=1e-15)


def test_step_probabilities_hand_computed():
    st = TruncatedState(n=8, j=0, counts=(1, 1, 0, 0), urn_total=2, ball_total=1)
    sched = Schedule.constant(0.5, 2.0)
    probs = step_probabilities(st, sched)
    # s = 1 + 2*2 = 5; new-or-empty: 0.5 + 0.5*2/5; size-1 urn: 0.5*3/5
    assert_allclose(probs, [0.7, 0.3, 0.0, 0.0], atol=1e-15)
    assert_allclose(probs.sum(), 1.0, atol=1e-15)


def test_step_probabilities_rows_sum_to_one():
    rng = np.random.default_rng(11)
    sched = Schedule.constant(0.2, 1.5)
    for _ in range(25):
        counts = tuple(int(z) for z in rng.integers(0, 5, size=5))
        if sum(counts) == 0:
            continue
        extra = int(rng.integers(0, 4))
        weight = sum(i * z for i, z in enumerate(counts[:-1])) + 4 * counts[-1]
        st = TruncatedState(n=50, j=int(rng.integers(0, 50)), counts=counts,
                            urn_total=sum(counts), ball_total=weight + extra)
        probs = step_probabilities(st, sched)
        assert np.all(probs >= 0.0)
        assert_allclose(probs.sum(), 1.0, atol=1e-12)


def test_step_probabilities_exhausted_and_empty():
    done = TruncatedState(n=5, j=5, counts=SEED2, urn_total=2, ball_total=5)
    with pytest.raises(ValueError):
        step_probabilities(done, CLASSICAL)
    void = TruncatedState(n=5, j=0, counts=(0, 0, 0, 0), urn_total=0, ball_total=0)
    with pytest.raises(ValueError):
        step_probabilities(void, CLASSICAL)


def test_run_conserves_urns_and_balls():
    out = run(60, 3, CLASSICAL, (2, 0, 0, 0, 0), seed=7)
    assert len(out.trajectory) == 61
    for j, st in enumerate(out.trajectory):
        assert st.j == j
        assert sum(st.counts) == st.urn_total == 2 + j
        assert st.ball_total == j
        visible = sum(i * z for i, z in enumerate(st.counts[:-1])) + 4 * st.counts[-1]
        assert visible <= st.ball_total
    # interpolated path agrees with the integer states at the knots
    assert_allclose(out.interpolated.values[-1],
                    np.asarray(out.trajectory[-1].counts) / 60)


def test_run_is_deterministic_in_seed():
    a = run(40, 2, CLASSICAL, SEED2, seed=123)
    b = run(40, 2, CLASSICAL, SEED2, seed=123)
    c = run(40, 2, CLASSICAL, SEED2, seed=124)
    assert a.trajectory == b.trajectory
    assert a.trajectory != c.trajectory


def test_one_step_frequencies_match_probabilities():
    # d = 2, mixed state; frequencies of the four increments over many
    # replicas should sit within 4 standard errors of the exact law.
    init = (1, 2, 1, 0)
    sched = Schedule.constant(0.3, 1.0)
    st = TruncatedState(n=1, j=0, counts=init, urn_total=4, ball_total=4)
    probs = step_probabilities(st, sched)
    num = 40_000
    terminal = run_ensemble_terminal(1, 2, sched, init, num, seed=99)
    delta = terminal - np.asarray(init)
    f = np.array([[0, 1, 0, 0], [1, -1, 1, 0], [1, 0, -1, 1], [1, 0, 0, 0]])
    freqs = np.array([(delta == row).all(axis=1).mean() for row in f])
    assert_allclose(freqs.sum(), 1.0, atol=1e-12)
    se = np.sqrt(probs * (1.0 - probs) / num)
    assert np.all(np.abs(freqs - probs) <= 4.0 * se + 1e-9)


def test_ensemble_shapes_and_conservation():
    hist = run_ensemble_paths(20, 1, CLASSICAL, (3, 0, 0), num_samples=8, seed=4)
    assert hist.shape == (8, 21, 3)
    assert np.all(hist[:, 0, :] == np.array([3, 0, 0]))
    urns = hist.sum(axis=2)
    assert np.all(urns == 3 + np.arange(21)[None, :])
    term = run_ensemble_terminal(20, 1, CLASSICAL, (3, 0, 0), num_samples=8, seed=4)
    assert np.all(term == hist[:, -1, :])


def test_ensemble_matches_exact_distribution():
    n, d = 6, 1
    dist = enumerate_exact(n, d, CLASSICAL, (2, 0, 0)).as_floats()
    term = run_ensemble_terminal(n, d, CLASSICAL, (2, 0, 0), num_samples=40_000, seed=21)
    keys, counts = np.unique(term, axis=0, return_counts=True)
    emp = {tuple(int(v) for v in k): c / 40_000 for k, c in zip(keys, counts)}
    support = set(dist) | set(emp)
    tv = 0.5 * sum(abs(dist.get(k, 0.0) - emp.get(k, 0.0)) for k in support)
    assert tv < 0.02
    assert set(emp) <= set(dist)  # no impossible states sampled


def test_sup_l1_distance_zero_on_own_path():
    out = run(30, 1, CLASSICAL, (2, 0, 0), seed=3)
    hist = np.array([[st.counts for st in out.trajectory]])
    dist = sup_l1_distance(hist, out.interpolated, 30)
    assert_allclose(dist, [0.0], atol=1e-14)


def test_sup_l1_distance_shifted_history():
    out = run(30, 1, CLASSICAL, (2, 0, 0), seed=3)
    hist = np.array([[st.counts for st in out.trajectory]])
    dist = sup_l1_distance(hist + np.array([3, 0, 0]), out.interpolated, 30)
    assert_allclose(dist, [0.1], atol=1e-14)  # constant 3/30 in one slot


def test_tube_probability_degenerate_radii():
    center = run(25, 1, CLASSICAL, (2, 0, 0), seed=17).interpolated
    query = TubeQuery(center, radius=50.0)
    est = estimate_tube_probability(query, 25, 1, CLASSICAL, (2, 0, 0),
                                    num_samples=64, seed=1)
    assert est.estimate == 1.0 and est.hits == 64 and est.stderr == 0.0
    with pytest.raises(ValueError):
        TubeQuery(center, radius=0.0)


def test_tube_probability_monotone_in_radius():
    center = run(25, 1, CLASSICAL, (2, 0, 0), seed=17).interpolated
    vals = []
    for r in (0.05, 0.2, 0.8):
        est = estimate_tube_probability(TubeQuery(center, r), 25, 1, CLASSICAL,
                                        (2, 0, 0), num_samples=400, seed=5)
        vals.append(est.estimate)
        assert est.hits == round(est.estimate * 400)
    assert vals[0] <= vals[1] <= vals[2]
