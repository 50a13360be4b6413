import itertools
from dataclasses import replace

import numpy as np
import pytest

from contactmsm import discretize, msm, pipeline as pl, projectors
from contactmsm.matrixio import TrajectorySet


def small_cfg(**kw):
    base = dict(method="pca", dims=2, lags=(1, 2), n_clusters=20, n_bootstrap=3, seed=11,
                batch_size=200)
    base.update(kw)
    return pl.RunConfig(**base)


# --- bootstrap ----------------------------------------------------------------


def ten_trajs():
    return TrajectorySet(tuple(np.full((3, 1), float(i)) for i in range(10)))


def test_bootstrap_full_fraction():
    sample = pl.bootstrap_sample(ten_trajs(), 1.0, seed=0)
    assert len(sample) == 10
    ids = [int(t[0, 0]) for t in sample]
    assert len(set(ids)) < 10  # with replacement, this seed repeats a trajectory


def test_bootstrap_counts():
    assert len(pl.bootstrap_sample(ten_trajs(), 0.2, seed=1)) == 2
    assert len(pl.bootstrap_sample(ten_trajs(), 0.25, seed=1)) == 3
    assert len(pl.bootstrap_indices(3, 0.1, seed=1)) == 1


def test_bootstrap_deterministic():
    a = pl.bootstrap_indices(50, 0.5, seed=4)
    np.testing.assert_array_equal(a, pl.bootstrap_indices(50, 0.5, seed=4))
    assert a.min() >= 0 and a.max() < 50


def test_bootstrap_errors():
    with pytest.raises(ValueError):
        pl.bootstrap_indices(0, 1.0, 0)
    with pytest.raises(ValueError):
        pl.bootstrap_indices(5, 0.0, 0)


# --- configuration ------------------------------------------------------------


def test_config_validation():
    for kw in ({"method": "lda"}, {"dims": 0}, {"lags": ()}, {"lags": (0,)}, {"fraction": 1.5},
               {"n_bootstrap": 0}, {"n_clusters": 0}, {"ae_beta": -1.0}, {"frame_interval": 0.0}):
        with pytest.raises(ValueError):
            small_cfg(**kw)


def test_config_hash_ignores_paths():
    a = small_cfg(input="a", output="b")
    b = small_cfg(input="c", output="d")
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 16
    assert a.config_hash() != small_cfg(seed=12).config_hash()


def test_tica_lag_default():
    assert small_cfg(lags=(5, 2)).effective_tica_lag == 2
    assert small_cfg(tica_lag=7).effective_tica_lag == 7


# --- replicates ---------------------------------------------------------------


def test_single_replicate_composition(small_hmm_data):
    _, feats = small_hmm_data
    cfg = small_cfg(n_bootstrap=1)
    table = pl.run_its_bootstrap(feats, cfg)

    seed = cfg.seed ^ 0
    sample = pl.bootstrap_sample(feats, 1.0, seed)
    model = projectors.pca_fit(sample.concatenated())
    proj = sample.map(lambda t: model.transform(t, 2))
    cm = discretize.minibatch_kmeans(proj.concatenated(), 20, batch_size=200, seed=seed)
    manual = msm.its_scan(discretize.assign(cm, proj), [1, 2])
    for lag in (1, 2):
        assert table.slowest(lag)[0] == manual.slowest(lag)[0]


def test_replicates_recorded_and_keyed(small_hmm_data):
    _, feats = small_hmm_data
    table = pl.run_its_bootstrap(feats, small_cfg())
    keys = [(e.lag, e.replicate, e.index) for e in table.entries]
    assert keys == sorted(keys) and len(keys) == 6
    assert {e.seed for e in table.entries} == {11 ^ r for r in range(3)}
    s = table.summary()
    assert [r["n_success"] for r in s] == [3, 3]


def test_failures_recorded(small_hmm_data):
    _, feats = small_hmm_data
    # more clusters than frames in any resample: every replicate fails, none aborts the run
    table = pl.run_its_bootstrap(feats, small_cfg(n_clusters=10**6))
    assert all(e.status.startswith(pl.FAILED) for e in table.entries)
    assert table.summary()[0]["n_success"] == 0
    assert table.summary()[0]["n_replicates"] == 3


def test_threads_do_not_change_results(small_hmm_data):
    _, feats = small_hmm_data
    cfg = small_cfg(n_bootstrap=2)
    a = pl.its_rows(pl.run_its_bootstrap(feats, cfg, threads=1), with_seed=True)
    b = pl.its_rows(pl.run_its_bootstrap(feats, cfg, threads=2), with_seed=True)
    assert a == b


def permutation_matched(c1, c2):
    """True when some relabeling of states maps count matrix c1 onto c2 exactly."""
    return any(np.array_equal(c1[np.ix_(p, p)], c2) for p in map(list, itertools.permutations(range(len(c1)))))


def test_none_matches_full_rank_pca(rng):
    trajs = TrajectorySet(tuple(rng.standard_normal((300, 4)) + rng.integers(0, 3, size=(300, 1)) * 3
                                for _ in range(4)))
    base = small_cfg(lags=(1,), n_bootstrap=1, n_clusters=6)
    r_none = pl.run_replicate(trajs, replace(base, method="none"), 0)
    r_pca = pl.run_replicate(trajs, replace(base, method="pca", dims=4), 0)
    c_none = msm.count_matrix(r_none.dtrajs, 1)
    c_pca = msm.count_matrix(r_pca.dtrajs, 1)
    assert permutation_matched(c_none, c_pca)


def test_every_method_runs(small_hmm_data):
    _, feats = small_hmm_data
    for method in ("ktri", "pca", "tica", "ae", "none"):
        cfg = small_cfg(method=method, n_bootstrap=1, ae_epochs=5, n_clusters=10)
        table = pl.run_its_bootstrap(feats, cfg)
        assert table.summary()[0]["n_success"] == 1, method


def test_dimension_scan_order_independent(small_hmm_data):
    _, feats = small_hmm_data
    cfg = small_cfg(n_bootstrap=2, lags=(1,))
    a = pl.dimension_scan(feats, cfg, [3, 1])
    b = pl.dimension_scan(feats, cfg, [1, 3])
    assert list(a) == list(b) == [1, 3]
    for d in (1, 3):
        assert pl.its_rows(a[d]) == pl.its_rows(b[d])
    assert len(pl.dimension_scan(feats, cfg, [2])) == 1
    with pytest.raises(ValueError):
        pl.dimension_scan(feats, cfg, [])


def test_csv_outputs(tmp_path, small_hmm_data):
    _, feats = small_hmm_data
    table = pl.run_its_bootstrap(feats, small_cfg(frame_interval=0.5))
    pl.write_its_csv(table, tmp_path / "its.csv", {"config_hash": "abc"}, with_seed=True)
    lines = (tmp_path / "its.csv").read_text().splitlines()
    assert lines[0].split(",") == pl.ITS_COLUMNS + ["replicate_seed", "config_hash"]
    assert len(lines) == 1 + 6
    first = lines[1].split(",")
    assert first[1] == "0.5" and first[-1] == "abc"
    pl.write_summary_csv(table, tmp_path / "s.csv")
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert "sd_timescale_physical_ddof1" in header


# --- component images ---------------------------------------------------------


def test_fold_round_trip(rng):
    a = rng.standard_normal((9, 9))
    m = a + a.T
    np.fill_diagonal(m, 0.0)
    img = pl.fold_component(pl.flatten_component(pl.ComponentImage(9, m)), 9)
    assert np.array_equal(img.matrix, m)


def test_fold_ones():
    img = pl.fold_component(np.ones(595), 35)
    np.testing.assert_array_equal(img.matrix, 1 - np.eye(35))


def test_fold_length_mismatch():
    with pytest.raises(ValueError):
        pl.fold_component(np.ones(594), 35)


def read_p3(path):
    tokens = path.read_text().split()
    assert tokens[0] == "P3"
    w, h = int(tokens[1]), int(tokens[2])
    px = np.array(tokens[4:], dtype=int).reshape(h, w, 3)
    return px


def test_p3_colors(tmp_path):
    m = np.array([[0.0, 2.0, -1.0], [2.0, 0.0, -2.0], [-1.0, -2.0, 0.0]])
    pl.export_component_image(pl.ComponentImage(3, m), tmp_path / "c.ppm")
    px = read_p3(tmp_path / "c.ppm")
    assert tuple(px[0, 1]) == (255, 0, 0)
    assert tuple(px[1, 2]) == (0, 0, 255)
    assert tuple(px[0, 2]) == (128, 128, 255)
    assert tuple(px[0, 0]) == (255, 255, 255)
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "c.csv", delimiter=","), m)


def test_p3_zero_matrix_white(tmp_path):
    pl.export_component_image(pl.ComponentImage(4, np.zeros((4, 4))), tmp_path / "z.ppm")
    assert np.all(read_p3(tmp_path / "z.ppm") == 255)


def test_component_vectors(rng):
    x = rng.standard_normal((40, 6))
    assert len(pl.component_vectors(projectors.pca_fit(x))) == 6
    assert len(pl.component_vectors(projectors.ktri_fit(x, 3))) == 3
    with pytest.raises(TypeError):
        pl.component_vectors(object())


# --- extreme frames -----------------------------------------------------------


def test_extreme_single_frame():
    assert pl.extreme_frames(TrajectorySet((np.array([[3.0]]),)), 0) == ((0, 0), (0, 0))


def test_extreme_monotone_column():
    t = np.arange(10, dtype=float)[:, None]
    assert pl.extreme_frames(TrajectorySet((t,)), 0) == ((0, 9), (0, 0))


def test_extreme_matches_scan(rng):
    trajs = TrajectorySet(tuple(rng.integers(-5, 6, size=(n, 3)).astype(float) for n in (7, 4, 9)))
    for dim in range(3):
        cells = [(t[f, dim], ti, f) for ti, t in enumerate(trajs) for f in range(len(t))]
        top = max(v for v, _, _ in cells)
        bottom = min(v for v, _, _ in cells)
        expect_max = min((ti, f) for v, ti, f in cells if v == top)
        expect_min = min((ti, f) for v, ti, f in cells if v == bottom)
        assert pl.extreme_frames(trajs, dim) == (expect_max, expect_min)


def test_extreme_bad_dim():
    with pytest.raises(ValueError):
        pl.extreme_frames(TrajectorySet((np.zeros((2, 2)),)), 2)
