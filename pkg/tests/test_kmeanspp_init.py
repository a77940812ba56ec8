import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _reference import brute_phi, brute_weights
from mkmeans.kmeanspp_init import (
    CandidateSet,
    InitConfig,
    cost_phi,
    init_multi_k,
    oversample,
    oversample_round,
    reduce_to_k,
    seed_initial,
    substream,
    weigh_candidates,
)
from mkmeans.mr_engine import Engine, EngineConfig

coords = st.floats(-100, 100, allow_nan=False)
point_arrays = st.lists(st.tuples(coords, coords), min_size=1, max_size=60).map(lambda p: np.array(p, dtype=np.float64))


# seed_initial


def test_single_point_seed():
    assert seed_initial(np.array([[1.0, 2.0]]), substream(9, 0)) == 0


def test_seed_is_deterministic():
    pts = np.random.default_rng(0).normal(size=(500, 2))
    picks = {seed_initial(pts, substream(42, 0)) for _ in range(5)}
    assert len(picks) == 1


def test_seed_uniform_over_equal_points():
    pts = np.zeros((4, 2))
    counts = np.bincount([seed_initial(pts, substream(s, 0)) for s in range(10_000)], minlength=4)
    assert np.all(np.abs(counts - 2500) <= 200), counts


def test_seed_rejects_empty():
    with pytest.raises(ValueError):
        seed_initial(np.empty((0, 2)), substream(0))


# cost_phi


def test_phi_zero_when_all_points_are_centers():
    pts = np.array([[0.0, 0.0], [1.0, 5.0]])
    assert cost_phi(pts, pts) == 0.0


def test_phi_single_distance():
    assert cost_phi(np.array([[0.0, 0.0], [3.0, 4.0]]), np.array([[0.0, 0.0]])) == 25.0


def test_phi_matches_brute_force():
    rng = np.random.default_rng(1)
    pts, centers = rng.normal(0, 10, (100, 2)), rng.normal(0, 10, (3, 2))
    assert cost_phi(pts, centers) == pytest.approx(brute_phi(pts, centers), rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(point_arrays, point_arrays)
def test_phi_property(pts, centers):
    assert cost_phi(pts, centers) == pytest.approx(brute_phi(pts, centers), rel=1e-9, abs=1e-9)


def test_phi_depends_on_chunking_only_through_rounding():
    rng = np.random.default_rng(2)
    pts, centers = rng.normal(0, 10, (5000, 2)), rng.normal(0, 10, (4, 2))
    with Engine(EngineConfig(workers=1, chunk_size=64)) as e1, Engine(EngineConfig(workers=4, chunk_size=64)) as e4:
        assert cost_phi(pts, centers, e1) == cost_phi(pts, centers, e4)
    with Engine(EngineConfig(workers=3, chunk_size=1000)) as e3:
        assert cost_phi(pts, centers, e3) == pytest.approx(cost_phi(pts, centers), rel=1e-12)


# oversample_round


def test_no_candidates_when_phi_zero():
    pts = np.array([[1.0, 1.0], [2.0, 2.0]])
    assert len(oversample_round(pts, pts, l=5, seed=0, round_index=0)) == 0


def test_huge_l_selects_every_non_center():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(300, 2))
    picked = oversample_round(pts, pts[:1], l=1e12, seed=0, round_index=0)
    np.testing.assert_array_equal(picked, np.arange(1, 300))


def test_round_is_deterministic_and_sorted():
    pts = np.random.default_rng(4).normal(size=(2000, 2))
    a = oversample_round(pts, pts[:1], 10, seed=5, round_index=2)
    b = oversample_round(pts, pts[:1], 10, seed=5, round_index=2)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.diff(a) > 0)
    with Engine(EngineConfig(workers=4)) as eng:
        np.testing.assert_array_equal(oversample_round(pts, pts[:1], 10, 5, 2, eng), a)


def test_expected_selections_near_l():
    l = 10.0
    pts = np.random.default_rng(6).uniform(-50, 50, size=(10_000, 2))
    i = seed_initial(pts, substream(6, 0))
    first = pts[i : i + 1]
    phi = cost_phi(pts, first)
    counts = [len(oversample_round(pts, first, l, seed=6, round_index=r, phi=phi)) for r in range(300)]
    assert abs(np.mean(counts) - l) <= 3 * np.sqrt(l)


# weigh_candidates


def test_weights_all_ones_when_candidates_are_points():
    pts = np.random.default_rng(7).normal(size=(40, 2))
    cs = weigh_candidates(pts, pts)
    np.testing.assert_array_equal(cs.weights, np.ones(40))


def test_weights_all_to_nearer_candidate():
    pts = np.random.default_rng(8).normal(0, 1, size=(50, 2))
    cs = weigh_candidates(pts, np.array([[0.0, 0.0], [1000.0, 1000.0]]))
    assert cs.weights.tolist() == [50, 0]


@settings(max_examples=60, deadline=None)
@given(point_arrays, point_arrays)
def test_weights_match_brute_force(pts, cands):
    cs = weigh_candidates(pts, cands)
    assert cs.weights.tolist() == brute_weights(pts, cands)
    assert cs.weights.sum() == len(pts)


def test_weight_ties_go_to_lowest_index():
    cs = weigh_candidates(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert cs.weights.tolist() == [1, 0]


# reduce_to_k


def _cands(n, seed=0):
    rng = np.random.default_rng(seed)
    return CandidateSet(rng.normal(0, 10, (n, 2)), rng.integers(1, 20, n), np.arange(n))


def test_reduce_identity_when_k_equals_size():
    np.testing.assert_array_equal(reduce_to_k(_cands(5), 5, substream(0)), np.arange(5))


def test_reduce_k1_proportional_to_weight():
    cs = CandidateSet(np.array([[0.0, 0.0], [5.0, 5.0]]), np.array([1, 3]), None)
    picks = np.array([reduce_to_k(cs, 1, substream(s))[0] for s in range(4000)])
    assert abs((picks == 1).mean() - 0.75) < 0.03


def test_reduce_zero_weight_never_picked_first():
    cs = CandidateSet(np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 9.0]]), np.array([0, 2, 0]), None)
    assert {int(reduce_to_k(cs, 1, substream(s))[0]) for s in range(200)} == {1}


def test_reduce_deterministic_membership():
    cs = _cands(10, seed=3)
    a = reduce_to_k(cs, 3, substream(17, 2, 3))
    b = reduce_to_k(cs, 3, substream(17, 2, 3))
    np.testing.assert_array_equal(a, b)
    assert len(set(a.tolist())) == 3 and set(a.tolist()) <= set(range(10))


def test_reduce_falls_back_to_uniform_when_mass_vanishes():
    cs = CandidateSet(np.zeros((4, 2)), np.ones(4), None)
    seen = set()
    for s in range(200):
        got = reduce_to_k(cs, 3, substream(s)).tolist()
        assert len(set(got)) == 3
        seen.update(got)
    assert seen == {0, 1, 2, 3}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**32))
def test_reduce_returns_distinct_indices(n, k, seed):
    got = reduce_to_k(_cands(n, seed % 100), k, substream(seed))
    assert len(got) == min(n, k) and len(set(got.tolist())) == len(got)
    assert got.min() >= 0 and got.max() < n


# init_multi_k


def test_single_k1():
    pts = np.random.default_rng(9).normal(size=(100, 2))
    models = init_multi_k(pts, {1})
    assert list(models) == [1] and models[1].centers.shape == (1, 2)


def test_multi_k_models_use_data_points():
    pts = np.random.default_rng(10).normal(0, 5, size=(3000, 2))
    models = init_multi_k(pts, [7, 5, 6], InitConfig(seed=4))
    assert sorted(models) == [5, 6, 7]
    for k, m in models.items():
        assert m.centers.shape == (k, 2) and m.partition_id == k
        np.testing.assert_array_equal(m.centers, pts[m.sources])
        assert len(set(map(tuple, m.centers))) == k


def test_multi_k_same_for_any_worker_count():
    pts = np.random.default_rng(11).normal(0, 5, size=(5000, 2))
    ref = None
    for w in (1, 2, 4):
        with Engine(EngineConfig(workers=w, chunk_size=700)) as eng:
            models = init_multi_k(pts, [3, 4], InitConfig(seed=8), eng)
        got = {k: m.centers.tobytes() for k, m in models.items()}
        ref = ref or got
        assert got == ref


def test_padding_when_candidates_scarce():
    # three distinct values, k=5: candidates dedupe to at most 3, the rest are padded
    pts = np.repeat(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]), 4, axis=0)
    m = init_multi_k(pts, [5], InitConfig(seed=1))[5]
    assert len(set(m.sources.tolist())) == 5


def test_k_larger_than_n():
    with pytest.raises(ValueError, match="k=5"):
        init_multi_k(np.zeros((3, 2)), [5])


def test_config_defaults_and_validation():
    assert InitConfig().oversampling([5, 6, 7]) == 14.0
    assert InitConfig(l=3).oversampling([5]) == 3.0
    with pytest.raises(ValueError):
        InitConfig(l=0)
    with pytest.raises(ValueError):
        InitConfig(rounds=0)


def test_oversample_candidates_are_distinct_and_weighted():
    pts = np.random.default_rng(12).normal(0, 3, size=(4000, 2))
    cs = oversample(pts, InitConfig(rounds=5, seed=2), l=8)
    assert cs.weights.sum() == len(pts)
    assert len(np.unique(cs.centers, axis=0)) == len(cs)
    np.testing.assert_array_equal(cs.centers, pts[cs.sources])
    assert 5 < len(cs) < 1 + 5 * 8 * 2
