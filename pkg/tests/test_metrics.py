import numpy as np
import pytest

from conftest import make_dataset
from romfwh.decomposition import truncated_svd
from romfwh.metrics import (compression_report, error_report, error_sweep, pressure_gauge_offset,
                            relative_frobenius_error, write_error_csv, write_summary_csv)
from romfwh.snapshot import Mesh, SnapshotDataset


def test_relative_error_examples(rng):
    x = rng.standard_normal((6, 4))
    assert relative_frobenius_error(x, x) == 0
    assert np.isclose(relative_frobenius_error(1.01 * x, x), 1.0, rtol=1e-12)
    y = rng.standard_normal((6, 4))
    num = sum((y[i, j] - x[i, j]) ** 2 for i in range(6) for j in range(4))
    den = sum(x[i, j] ** 2 for i in range(6) for j in range(4))
    assert np.isclose(relative_frobenius_error(y, x), 100 * np.sqrt(num / den), rtol=1e-12)
    with pytest.raises(ZeroDivisionError):
        relative_frobenius_error(x, np.zeros_like(x))


def test_homogeneity(rng):
    x, e = rng.standard_normal(50), rng.standard_normal(50)
    for c in (-3.0, 0.5, 7.0):
        assert np.isclose(relative_frobenius_error(x + c * e, x), abs(c) * relative_frobenius_error(x + e, x))


def test_sweep_full_rank_and_global_mean(rng):
    X = rng.standard_normal((80, 20))
    ds = make_dataset(X)
    reps = error_sweep(lambda r, t: truncated_svd(X, r).reconstruction(), ds, [1, 5, 20])
    assert reps[-1].global_error < 1e-8
    for rep in reps:
        assert rep.global_error == np.mean(rep.per_snapshot)
        assert np.all(rep.per_snapshot >= 0)
    assert reps[0].global_error > reps[1].global_error > reps[2].global_error


def test_rank_one_on_rank_two_positive(rng):
    X = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 8))
    rep = error_sweep(lambda r, t: truncated_svd(X, r).reconstruction(), make_dataset(X), [1])[0]
    assert np.all(rep.per_snapshot > 0)


def test_gauge_offset():
    mesh = Mesh.structured((3, 2, 1), (1.0, 1.0, 1.0))
    ds = SnapshotDataset(mesh, np.arange(4.0), np.zeros((24, 4)))
    up = pressure_gauge_offset(ds, 1.0)
    assert np.all(up.block("p") == 1) and np.all(up.block("u") == 0)
    assert np.array_equal(pressure_gauge_offset(up, -1.0).snapshots, ds.snapshots)
    assert np.isclose(np.linalg.norm(up.block("p")), np.sqrt(6 * 4))
    with pytest.raises(KeyError):
        pressure_gauge_offset(ds.subset(("u",)), 1.0)


def test_compression_levels():
    rep = compression_report(10 ** 8, 200, 20)
    assert abs(rep.compression_level - 9.9973) / 9.9973 < 0.01
    assert np.isclose(compression_report(10 ** 8, 200, 200).compression_level, 1.0, rtol=1e-3)
    assert compression_report(100, 200, 2, timings=(3.0, 3.0)).speedup == 1.0
    assert compression_report(100, 200, 2).speedup is None
    with pytest.raises(ValueError):
        compression_report(100, 200, 0)


def test_csv_writers(tmp_path, rng):
    X = rng.standard_normal((10, 4))
    rep = error_report(X + 0.1, make_dataset(X), 3, "prediction")
    write_error_csv([rep], tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "rank,snapshot_index,time,error_percent" and len(lines) == 5
    write_summary_csv([(3, rep.global_error, 12.5, None)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "rank,global_error_percent,compression_level,speedup"
