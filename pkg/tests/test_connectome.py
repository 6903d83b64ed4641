import math
import zipfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import write_zip
from neuroloom.connectome import (Connectome, build_sparse, connectome_stats, lesion_incoming,
                                  load_connectome, random_connectome, rewire_scale,
                                  save_connectome)
from neuroloom.errors import ConnectomeError
from oracles import delay_matrix


def test_load_three_region_fixture(three_region_zip):
    c = load_connectome(three_region_zip)
    assert c.n_regions == 3
    assert c.n_edges == 3
    assert c.centres is None and c.cortical is None and c.areas is None


def test_missing_tract_lengths_is_named(tmp_path):
    z = write_zip(tmp_path / "c.zip", {"weights.txt": "0 1\n1 0\n"})
    with pytest.raises(ConnectomeError, match="tract_lengths.txt"):
        load_connectome(z)


@pytest.mark.parametrize("weights,lengths,match", [
    ("0 1\n1 0 2\n", "0 1\n1 0\n", "weights.txt"),
    ("0 1\n1 0\n", "0 1 1\n1 0 1\n1 1 0\n", "tract_lengths.txt"),
    ("0 -1\n1 0\n", "0 1\n1 0\n", "weights.txt"),
    ("0 nan\n1 0\n", "0 1\n1 0\n", "weights.txt"),
    ("0 1\n1 x\n", "0 1\n1 0\n", "line 2"),
])
def test_malformed_files_are_rejected(tmp_path, weights, lengths, match):
    z = write_zip(tmp_path / "c.zip", {"weights.txt": weights, "tract_lengths.txt": lengths})
    with pytest.raises(ConnectomeError, match=match):
        load_connectome(z)


def test_unknown_files_are_ignored(tmp_path):
    z = write_zip(tmp_path / "c.zip", {"weights.txt": "0 1\n1 0\n",
                                       "tract_lengths.txt": "0 1\n1 0\n", "info.txt": "hi"})
    assert load_connectome(z).n_regions == 2


def test_optional_files_round_trip(tmp_path):
    c = random_connectome(5, seed=3)
    o = np.random.default_rng(0).normal(size=(5, 3))
    c = Connectome(weights=c.weights, tract_lengths=c.tract_lengths, labels=c.labels,
                   centres=c.centres, cortical=np.array([1, 0, 1, 1, 0], bool),
                   hemisphere=np.array([0, 0, 1, 1, 1], bool),
                   orientations=o / np.linalg.norm(o, axis=1, keepdims=True),
                   areas=np.arange(5.0))
    save_connectome(c, tmp_path / "c.zip")
    assert load_connectome(tmp_path / "c.zip").equals(c)


def test_save_two_regions_writes_two_rows(tmp_path):
    c = Connectome(weights=np.array([[0, 0.5], [0.25, 0]]), tract_lengths=np.ones((2, 2)),
                   labels=["a", "b"])
    save_connectome(c, tmp_path / "c.zip")
    with zipfile.ZipFile(tmp_path / "c.zip") as zf:
        rows = zf.read("weights.txt").decode().strip().splitlines()
    assert len(rows) == 2 and all(len(r.split()) == 2 for r in rows)
    assert load_connectome(tmp_path / "c.zip").n_edges == 2


def test_save_load_save_is_byte_identical(tmp_path):
    c = random_connectome(7, seed=9)
    save_connectome(c, tmp_path / "a.zip")
    save_connectome(load_connectome(tmp_path / "a.zip"), tmp_path / "b.zip")
    with zipfile.ZipFile(tmp_path / "a.zip") as a, zipfile.ZipFile(tmp_path / "b.zip") as b:
        assert a.namelist() == b.namelist()
        for name in a.namelist():
            assert a.read(name) == b.read(name)


def test_invariants_are_enforced():
    with pytest.raises(ConnectomeError):
        Connectome(weights=np.ones((2, 2)), tract_lengths=np.ones((2, 2)), labels=["a", "a"])
    with pytest.raises(ConnectomeError):
        Connectome(weights=np.ones((2, 2)), tract_lengths=np.ones((2, 2)), labels=["a", "b"],
                   orientations=np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), density=st.floats(0.0, 1.0), seed=st.integers(0, 2**31))
def test_round_trip_is_lossless(tmp_path_factory, n, density, seed):
    c = random_connectome(n, density=density, seed=seed)
    path = tmp_path_factory.mktemp("rt") / "c.zip"
    save_connectome(c, path)
    back = load_connectome(path)
    assert back.equals(c)
    assert np.array_equal(back.weights, c.weights)


# -- sparse coupling -----------------------------------------------------------

def test_delay_rounding_example():
    c = Connectome(weights=np.array([[0, 1.0], [0, 0]]), tract_lengths=np.array([[0, 78.0], [0, 0]]),
                   labels=["a", "b"])
    sc = build_sparse(c, 3.9, 0.1)
    assert sc.delay_steps.tolist() == [200]
    assert sc.horizon == 201


def test_delay_rounds_half_up():
    c = Connectome(weights=np.array([[0, 1.0, 1.0], [0, 0, 0], [0, 0, 0]]),
                   tract_lengths=np.array([[0, 1.25, 1.75], [0, 0, 0], [0, 0, 0]]),
                   labels=["a", "b", "c"])
    # 2.5 and 3.5 steps are exact in binary and round up
    assert build_sparse(c, 1.0, 0.5).delay_steps.tolist() == [3, 4]


def test_all_below_threshold_gives_no_edges():
    c = random_connectome(6, density=1.0, seed=1, max_weight=0.5)
    sc = build_sparse(c, 3.0, 0.1, weight_threshold=0.5)
    assert sc.n_edges == 0 and sc.horizon == 1
    assert sc.row_ptr.tolist() == [0] * 7


def test_bad_speed_or_dt():
    c = random_connectome(3, seed=1)
    for speed, dt in [(0, 0.1), (3.0, 0.0), (-1, 0.1)]:
        with pytest.raises(ConnectomeError):
            build_sparse(c, speed, dt)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), density=st.floats(0.0, 1.0), seed=st.integers(0, 2**31),
       speed=st.floats(0.5, 10.0), dt=st.sampled_from([0.05, 0.1, 0.2]),
       threshold=st.floats(0.0, 0.9))
def test_sparse_structure_invariants(n, density, seed, speed, dt, threshold):
    c = random_connectome(n, density=density, seed=seed, self_loops=True)
    sc = build_sparse(c, speed, dt, threshold)
    assert sc.row_ptr[0] == 0 and sc.row_ptr[-1] == sc.n_edges
    assert np.all(np.diff(sc.row_ptr) >= 0)
    assert sc.n_edges == int((c.weights > threshold).sum())
    assert np.all(sc.delay_steps < sc.horizon)
    assert sc.src_idx.size == sc.weight.size == sc.delay_steps.size == sc.n_edges
    D = delay_matrix(c.tract_lengths, speed, dt)
    for i in range(n):
        lo, hi = sc.row_ptr[i], sc.row_ptr[i + 1]
        src = sc.src_idx[lo:hi]
        assert np.all(np.diff(src) > 0)
        assert np.array_equal(src, np.flatnonzero(c.weights[i] > threshold))
        assert np.array_equal(sc.delay_steps[lo:hi], D[i, src])


def test_sparse_storage_is_linear_in_edges():
    c = random_connectome(200, density=0.02, seed=5)
    sc = build_sparse(c, 3.0, 0.1)
    stored = sc.src_idx.nbytes + sc.weight.nbytes + sc.delay_steps.nbytes + sc.row_ptr.nbytes
    assert stored < 32 * (sc.n_edges + 201)


@pytest.mark.parametrize("seed", range(5))
def test_sparse_coupling_sum_matches_dense(seed):
    gen = np.random.default_rng(seed)
    n = 16
    c = random_connectome(n, density=gen.uniform(0.1, 1.0), seed=seed)
    sc = build_sparse(c, 2.5, 0.1)
    hist = gen.normal(size=(sc.horizon, n))  # hist[d] = value committed d steps ago
    sparse_sum = np.zeros(n)
    for i in range(n):
        for e in range(sc.row_ptr[i], sc.row_ptr[i + 1]):
            sparse_sum[i] += sc.weight[e] * hist[sc.delay_steps[e], sc.src_idx[e]]
    D = delay_matrix(c.tract_lengths, 2.5, 0.1)
    dense = np.array([sum(c.weights[i, j] * hist[D[i, j], j] for j in range(n)
                          if c.weights[i, j] > 0) for i in range(n)])
    assert np.allclose(sparse_sum, dense, rtol=1e-12, atol=1e-12)


# -- lesion / rewire -------------------------------------------------------------

def _ten_incoming():
    w = np.zeros((11, 11))
    w[0, 1:] = np.arange(1, 11)
    return Connectome(weights=w, tract_lengths=np.ones((11, 11)) - np.eye(11),
                      labels=[f"r{i}" for i in range(11)])


def test_lesion_count_example():
    c = _ten_incoming()
    out = lesion_incoming(c, 0, 0.3, seed=4)
    assert int((out.weights[0] > 0).sum()) == 7
    assert np.array_equal(out.weights[1:], c.weights[1:])


def test_lesion_fraction_zero_and_one():
    c = random_connectome(8, density=0.8, seed=2)
    assert np.array_equal(lesion_incoming(c, 3, 0.0, seed=1).weights, c.weights)
    full = lesion_incoming(c, 3, 1.0, seed=1)
    assert np.all(full.weights[3] == 0)
    assert np.array_equal(np.delete(full.weights, 3, 0), np.delete(c.weights, 3, 0))


def test_lesion_reproducible_and_seed_dependent():
    c = _ten_incoming()
    a = lesion_incoming(c, 0, 0.5, seed=11).weights
    assert np.array_equal(a, lesion_incoming(c, 0, 0.5, seed=11).weights)
    subsets = {tuple(lesion_incoming(c, 0, 0.5, seed=s).weights[0] > 0) for s in range(20)}
    assert len(subsets) > 1


def test_lesion_errors():
    c = random_connectome(4, seed=0)
    with pytest.raises(ConnectomeError):
        lesion_incoming(c, 0, 1.5, seed=0)
    with pytest.raises(ConnectomeError):
        lesion_incoming(c, 4, 0.5, seed=0)


def test_restore_strength_example():
    w = np.zeros((4, 4))
    w[0, 1:] = [2.0, 2.0, 2.0]  # in-strength 6
    c = Connectome(weights=w, tract_lengths=np.ones((4, 4)), labels=list("abcd"))
    lesioned = Connectome(weights=np.where(np.arange(4) == 3, 0.0, w), tract_lengths=c.tract_lengths,
                          labels=c.labels)
    assert lesioned.weights[0].sum() == 4.0
    out = rewire_scale(lesioned, 0, restore_strength=6.0)
    assert np.allclose(out.weights[0, 1:3], 3.0)
    assert out.weights[0].sum() == pytest.approx(6.0, abs=1e-12)


def test_rewire_factor():
    c = random_connectome(5, seed=1)
    assert np.array_equal(rewire_scale(c, 2, factor=1.0).weights, c.weights)
    doubled = rewire_scale(c, 2, factor=2.0).weights
    assert np.array_equal(doubled[2], 2 * c.weights[2])
    with pytest.raises(ConnectomeError):
        rewire_scale(c, 2, factor=0.0)


def test_restore_with_no_survivors_is_noop():
    c = lesion_incoming(random_connectome(5, density=1.0, seed=1), 1, 1.0, seed=0)
    assert np.array_equal(rewire_scale(c, 1, restore_strength=3.0).weights, c.weights)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), fraction=st.floats(0.0, 0.99), region=st.integers(0, 9))
def test_lesion_then_restore_preserves_in_strength(seed, fraction, region):
    c = random_connectome(10, density=0.9, seed=seed)
    before = c.weights[region].sum()
    m = int((c.weights[region] > 0).sum())
    lesioned = lesion_incoming(c, region, fraction, seed)
    removed = m - int((lesioned.weights[region] > 0).sum())
    assert removed == math.floor(fraction * m + 0.5)
    out = rewire_scale(lesioned, region, restore_strength=before)
    if (lesioned.weights[region] > 0).any():
        assert abs(out.weights[region].sum() - before) <= 1e-12 * max(1.0, before)


# -- stats -----------------------------------------------------------------------

def test_stats_three_region(three_region_zip):
    s = connectome_stats(load_connectome(three_region_zip))
    assert s.n_edges == 3
    assert s.in_degree.tolist() == [1, 1, 1]
    assert s.weight_min == 1 and s.weight_max == 3 and s.weight_mean == 2


def test_stats_symmetric_degrees():
    s = connectome_stats(random_connectome(9, seed=4, symmetric=True))
    assert np.array_equal(s.in_degree, s.out_degree)


def test_stats_lesion_bookkeeping():
    c = random_connectome(10, density=0.8, seed=8)
    out = lesion_incoming(c, 4, 0.5, seed=3)
    removed = c.weights[4][(c.weights[4] > 0) & (out.weights[4] == 0)].sum()
    drop = connectome_stats(c).in_strength[4] - connectome_stats(out).in_strength[4]
    assert drop == pytest.approx(removed, rel=1e-12)
