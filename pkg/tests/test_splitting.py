import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrocert.dataset import ColumnSpec, Dataset
from surrocert.splitting import (SplitResult, VoxelDistanceStats, VtpmClass, classify_distance,
                                 holdout_split, voxel_chi2, voxel_distance_stats, voxelize,
                                 vtpm_classify, vtpm_report)

from conftest import small_dataset


def test_holdout_counts_and_determinism():
    s = holdout_split(10, 0.8, seed=3)
    assert len(s.train_indices) == 8 and len(s.test_indices) == 2
    assert not set(s.train_indices) & set(s.test_indices)
    t = holdout_split(10, 0.8, seed=3)
    assert np.array_equal(s.test_indices, t.test_indices)


@pytest.mark.parametrize("p", [0.5, 1.0, 0.3])
def test_holdout_rejects_fraction(p):
    with pytest.raises(ValueError):
        holdout_split(10, p)


def test_holdout_lhs(ds):
    s = holdout_split(ds, 0.8, seed=1, strategy="lhs")
    assert len(s.test_indices) == 12
    assert np.array_equal(np.union1d(s.train_indices, s.test_indices), np.arange(ds.N))


@given(st.integers(5, 300), st.floats(0.55, 0.95), st.integers(0, 10 ** 6))
def test_split_partition(N, p, seed):
    try:
        s = holdout_split(N, p, seed)
    except ValueError:
        return  # rounding left train <= test
    assert len(s.train_indices) == round(p * N)
    assert np.array_equal(np.sort(np.concatenate([s.train_indices, s.test_indices])), np.arange(N))


def test_split_result_rejects_overlap():
    with pytest.raises(ValueError):
        SplitResult(np.array([0, 1, 2]), np.array([2]), 0.75)


def test_voxelize_product_of_levels():
    a, b = np.meshgrid(range(3), range(4))
    df = pd.DataFrame({"a": a.ravel(), "b": b.ravel()})
    t = voxelize(df, ["a", "b"])
    assert len(t.voxels) == 12
    single = voxelize(df, ["a"])
    assert sorted(single.voxels) == [(0,), (1,), (2,)]
    with pytest.raises(ValueError):
        voxelize(df, [])


def test_voxelize_residual_for_unseen_tuple():
    tr = voxelize(pd.DataFrame({"a": [0, 1]}), ["a"])
    te = voxelize(pd.DataFrame({"a": [1, 5, 0]}), ["a"], reference=tr)
    assert te.residual.tolist() == [1]
    assert te.size == 3


def _tables(tr_counts, te_counts):
    mk = lambda counts: pd.DataFrame({"v": np.repeat(np.arange(len(counts)), counts)})
    return voxelize(mk(tr_counts), ["v"]), voxelize(mk(te_counts), ["v"])


def test_chi2_examples():
    r = voxel_chi2(*_tables([50, 50], [50, 50]))
    assert r.statistic == 0 and r.pvalue == 1
    r = voxel_chi2(*_tables([30, 40, 50], [30, 40, 50]))
    assert r.statistic == 0 and r.pvalue == 1
    r = voxel_chi2(*_tables([90, 10], [10, 90]))
    # closed form for a 2x2 table: N (ad - bc)^2 / (r1 r2 c1 c2)
    assert r.statistic == pytest.approx(200 * (90 * 90 - 10 * 10) ** 2 / 100 ** 4)
    assert r.pvalue < 1e-3
    with pytest.raises(ValueError):
        voxel_chi2(*_tables([100], [100]))


@given(st.lists(st.integers(5, 60), min_size=2, max_size=6), st.integers(0, 1000))
def test_chi2_symmetric(counts, seed):
    other = np.random.default_rng(seed).permutation(counts)
    a = voxel_chi2(*_tables(counts, other))
    b = voxel_chi2(*_tables(other, counts))
    assert a.statistic == pytest.approx(b.statistic)


def test_classify_examples():
    vs = VoxelDistanceStats(0.1, 0.5, 10)
    assert classify_distance(0.3, vs) == "Valid"
    assert classify_distance(0.1, vs) == "PHacking"
    assert classify_distance(0.5, vs) == "Isolated"
    P = np.random.default_rng(0).uniform(size=(100, 2))
    vs = voxel_distance_stats(P)
    assert vtpm_classify(P[7], P, vs) == "PHacking"
    far = np.array([5.0, 5.0])
    d_oracle = min(np.hypot(*(p - far)) for p in P)
    assert d_oracle >= vs.p97_5
    assert vtpm_classify(far, P, vs) == "Isolated"
    with pytest.raises(ValueError):
        vtpm_classify(far, np.empty((0, 2)), vs)


def test_distance_stats_modes():
    P = np.random.default_rng(1).uniform(size=(50, 3))
    near = voxel_distance_stats(P, "nearest")
    pairs = voxel_distance_stats(P, "all_pairs")
    assert near.pair_count == 50 and pairs.pair_count == 50 * 49 // 2
    assert 0 <= near.p2_5 <= near.p97_5
    with pytest.raises(ValueError):
        voxel_distance_stats(P[:1])


def test_distance_stats_subsample_uses_full_voxel():
    P = np.random.default_rng(2).uniform(size=(3000, 2))
    vs = voxel_distance_stats(P, max_points=500, rng=0)
    full = voxel_distance_stats(P, max_points=10 ** 6)
    assert vs.pair_count == 500
    assert vs.p97_5 == pytest.approx(full.p97_5, rel=0.15)


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 100))
def test_classification_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    P, Z = rng.uniform(size=(40, 3)), rng.uniform(size=(10, 3))
    vs = voxel_distance_stats(P)
    vs_c = voxel_distance_stats(c * P)
    for z in Z:
        assert vtpm_classify(z, P, vs) == vtpm_classify(c * z, c * P, vs_c)


def _voxel_dataset(N, seed, dup=False):
    rng = np.random.default_rng(seed)
    schema = [ColumnSpec("a", "ordinal"), ColumnSpec("b", "ordinal"), ColumnSpec("x1"),
              ColumnSpec("x2"), ColumnSpec("y", role="output")]
    df = pd.DataFrame({"a": rng.integers(0, 3, N), "b": rng.integers(0, 2, N),
                       "x1": rng.uniform(size=N), "x2": rng.uniform(size=N)})
    df["y"] = df.x1
    if dup:
        df = pd.concat([df, df], ignore_index=True)
    return Dataset(schema, df)


def test_report_duplicated_test_set():
    ds = _voxel_dataset(400, 0, dup=True)
    rep = vtpm_report(SplitResult(np.arange(400), np.arange(400, 800)[:300], 0.57), ds)
    assert rep.class_fractions["PHacking"] == 1.0
    assert not rep.adequate


def test_report_unseen_tuples_all_residual():
    ds = _voxel_dataset(300, 1)
    frame = ds.frame.copy()
    test = np.arange(200, 300)
    frame.loc[test, "a"] = 99
    rep = vtpm_report(SplitResult(np.arange(200), test, 2 / 3), Dataset(ds.schema, frame))
    assert rep.residual_fraction == 1.0 and not rep.adequate


def test_report_invariants_and_determinism():
    ds = _voxel_dataset(2000, 2)
    s = holdout_split(ds, 0.8, seed=0)
    a, b = vtpm_report(s, ds, seed=5), vtpm_report(s, ds, seed=5)
    assert sum(a.class_fractions.values()) == pytest.approx(1.0)
    assert a.adequate == (a.valid_fraction >= 0.95 and a.residual_fraction <= 0.05)
    assert a.to_dict() == b.to_dict()
    assert a.valid_fraction > 0.85
    assert set(a.classes) <= {c.value for c in VtpmClass}


def test_report_sparse_voxels_isolated():
    ds = small_dataset(N=30)
    frame = ds.frame.copy()
    frame.loc[[0, 1], ["frame", "stringer"]] = [7, 3]
    ds = Dataset(ds.schema, frame)
    rep = vtpm_report(SplitResult(np.arange(1, 25), np.array([0, 29]), 0.8), ds)
    # row 0 shares its voxel with a single training point (row 1)
    assert rep.classes[0] == "Isolated"
