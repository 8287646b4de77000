import numpy as np
import pytest

from romfwh import cli
from romfwh.dmd import evaluate_dmd, fit_dmd, load_dmd
from romfwh.metrics import error_report, pressure_gauge_offset
from romfwh.snapshot import Mesh, SnapshotDataset, load_dataset, save_dataset, split_train_test


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    path = d / "data.romsnap"
    assert cli.main(["generate", "--out", str(path), "--seed", "3"]) == 0
    return path


def _csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_generate_with_config(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("m = 12\ndims = 6, 5, 5\ncomponents = wake:0.1:20\n")
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "d.romsnap")]) == 0
    assert load_dataset(tmp_path / "d.romsnap").m == 12


def test_decompose_compression(data, tmp_path, capsys):
    assert cli.main(["decompose", "--input", str(data), "--rank", "20", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "decompose_summary.csv").read_text().splitlines()
    assert rows[0] == "group,rank,cumulative_energy,compression_level"
    for row in rows[1:]:
        assert abs(float(row.split(",")[3]) - 9.9973) / 9.9973 < 0.01
    assert (tmp_path / "sv_U.csv").read_text().startswith("index,sigma_normalized\n")


def test_fft_peak(data, tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert cli.main(["fft", "--input", str(data), "--probe", "0.02,0,0", "--out", str(out)]) == 0
    spec = _csv(out)
    assert spec[np.argmax(spec[:, 1]), 0] == pytest.approx(20.0)
    assert "20 Hz" in capsys.readouterr().out


def test_fit_and_errors_match_in_process(data, tmp_path):
    model_path = tmp_path / "u.dmdmodel"
    assert cli.main(["fit-dmd", "--input", str(data), "--rank", "4", "--fields", "u,v,w",
                     "--subtract-mean", "--out", str(model_path)]) == 0
    err_path = tmp_path / "e.csv"
    assert cli.main(["errors", "--input", str(data), "--model", str(model_path), "--out", str(err_path)]) == 0
    ds = pressure_gauge_offset(load_dataset(data), 1.0).subset(("u", "v", "w"))
    train, test = split_train_test(ds)
    model = fit_dmd(train, 4, subtract_mean=True)
    rep = error_report(evaluate_dmd(model, test.times), test, 4)
    assert np.array_equal(_csv(err_path)[:, 3], rep.per_snapshot)
    assert np.array_equal(load_dmd(model_path).modes, model.modes)


def test_fit_podi_and_errors(data, tmp_path):
    mp = tmp_path / "p.podimodel"
    assert cli.main(["fit-podi", "--input", str(data), "--rank", "3", "--fields", "p", "--out", str(mp)]) == 0
    assert cli.main(["errors", "--input", str(data), "--model", str(mp), "--mode", "reconstruction",
                     "--out", str(tmp_path / "e.csv")]) == 0
    assert _csv(tmp_path / "e.csv").shape[0] == 100


def test_probes_qcrit_forces(data, tmp_path):
    assert cli.main(["probes", "--input", str(data), "--probe", "0.02,0,0", "--probe", "0,0,0.02",
                     "--field", "p", "--out", str(tmp_path / "pr")]) == 0
    assert _csv(tmp_path / "pr" / "probe_1.csv").shape == (200, 2)
    with pytest.warns(UserWarning):
        assert cli.main(["qcrit", "--input", str(data), "--level", "4", "--out", str(tmp_path / "q.csv")]) == 0
    assert cli.main(["qcrit", "--input", str(data), "--level", "0.001", "--out", str(tmp_path / "q.csv")]) == 0
    assert _csv(tmp_path / "q.csv").shape[0] > 0
    assert cli.main(["forces", "--input", str(data), "--p0", "1.0", "--out", str(tmp_path / "f.csv")]) == 0
    assert _csv(tmp_path / "f.csv").shape == (200, 3)


def test_fwh_zero_fields(tmp_path):
    mesh = Mesh.structured((41, 21, 21), (0.0025,) * 3, (-0.02, -0.025, -0.025))
    ds = SnapshotDataset(mesh, np.arange(8) * 0.002, np.zeros((4 * mesh.n_cells, 8)))
    path = tmp_path / "z.romsnap"
    save_dataset(ds, path)
    out = tmp_path / "fwh.csv"
    assert cli.main(["fwh", "--input", str(path), "--mic", "A", "--panels", "200", "--out", str(out),
                     "--spl", str(tmp_path / "spl.csv")]) == 0
    sig = _csv(out)
    assert sig.shape == (8, 3) and np.all(sig[:, 1:] == 0)
    assert np.all(_csv(tmp_path / "spl.csv")[:, 1] == -400.0)


def test_exit_codes(data, tmp_path, capsys):
    assert cli.main(["fft", "--input", str(tmp_path / "missing.romsnap"), "--probe", "0,0,0",
                     "--out", str(tmp_path / "s.csv")]) == cli.EXIT_IO
    bad = tmp_path / "bad.romsnap"
    bad.write_bytes(b"junk")
    assert cli.main(["decompose", "--input", str(bad), "--rank", "2", "--out", str(tmp_path)]) == cli.EXIT_IO
    assert cli.main(["decompose", "--input", str(data), "--rank", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["report", "--ranks", "0", "--out", str(tmp_path / "r")]) == cli.EXIT_CONFIG
    assert "rank" in capsys.readouterr().err
    z = tmp_path / "rank1.romsnap"
    mesh = Mesh.structured((2, 2, 2), (1.0, 1.0, 1.0))
    save_dataset(SnapshotDataset(mesh, np.arange(10.0), np.ones((32, 10))), z)
    assert cli.main(["fit-dmd", "--input", str(z), "--rank", "3", "--out", str(tmp_path / "m")]) == cli.EXIT_NUMERICAL
    assert cli.main(["fft", "--probe", "0,0,0", "--out", str(tmp_path / "s.csv")]) == cli.EXIT_CONFIG


def test_report_small(tmp_path, capsys):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("[pipeline]\nn_panels = 200\n[synth]\nm = 40\ndims = 21, 11, 11\nspacing = 0.004, 0.004, 0.004\n"
                   "origin = -0.02, -0.02, -0.02\n")
    assert cli.main(["report", "--config", str(cfg), "--ranks", "2", "--rom", "podi", "--seed", "1",
                     "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "summary.json").exists()
    assert "probe B dominant frequency" in capsys.readouterr().out


def test_thread_cap_and_module_entry(data, tmp_path, monkeypatch):
    import subprocess
    import sys

    monkeypatch.setenv("ROM_THREADS", "1")
    assert cli.main(["fft", "--input", str(data), "--probe", "0.02,0,0", "--out", str(tmp_path / "a.csv")]) == 0
    res = subprocess.run([sys.executable, "-m", "romfwh", "fft", "--input", str(data), "--probe", "0.02,0,0",
                          "--out", str(tmp_path / "b.csv")], capture_output=True, text=True)
    assert res.returncode == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
