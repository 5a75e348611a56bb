import csv
import math
import struct

import numpy as np
import pytest

from delaydoppler.cli import main
from delaydoppler.config import DEFAULTS, RunConfig
from delaydoppler.exceptions import ConfigError, ParseError
from delaydoppler.formats import (
    HEADER_SIZE,
    ctf1_size,
    fmt,
    read_ctf1,
    read_ground_truth,
    write_ctf1,
)
from delaydoppler.signal_model import RadarGrid

SMALL = ["--set", "grid.K=256", "--set", "grid.L=64", "--set", "grid.delta_f=625000.0", "--set", "grid.delta_t=0.0001"]


def rows(path):
    lines = [l for l in open(path).read().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def test_header_layout():
    assert HEADER_SIZE == 4 + 4 + 4 + 8 + 8 + 4
    assert ctf1_size(1024, 100, 10) == 32 + 10 * 1024 * 100 * 8


def test_ctf1_roundtrip(tmp_path):
    g = RadarGrid(4, 3, 1e6, 1e-4)
    rng = np.random.default_rng(0)
    data = (rng.normal(size=(2, 4, 3)) + 1j * rng.normal(size=(2, 4, 3))).astype(np.complex64)
    write_ctf1(tmp_path / "f.ctf", g, list(data))
    raw = (tmp_path / "f.ctf").read_bytes()
    assert raw[:4] == b"CTF1"
    assert struct.unpack_from("<IIddI", raw, 4) == (4, 3, 1e6, 1e-4, 2)
    # k-major interleaved float32 pairs
    assert struct.unpack_from("<ff", raw, 32 + 8 * 1) == (data[0, 0, 1].real, data[0, 0, 1].imag)
    g2, back = read_ctf1(tmp_path / "f.ctf")
    assert g2 == g and np.array_equal(back, data.astype(complex))


def test_ctf1_errors_name_offsets(tmp_path):
    g = RadarGrid(4, 3, 1e6, 1e-4)
    p = tmp_path / "f.ctf"
    write_ctf1(p, g, [np.zeros((4, 3))])
    raw = p.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError, match="offset 0"):
        read_ctf1(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:50])
    with pytest.raises(ParseError, match="offset 50") as err:
        read_ctf1(tmp_path / "short")
    assert err.value.offset == 50
    (tmp_path / "long").write_bytes(raw + b"\0")
    with pytest.raises(ParseError):
        read_ctf1(tmp_path / "long")


def test_fmt():
    assert fmt(None) == "" and fmt(math.nan) == "" and fmt(0.1) == "0.1" and fmt(True) == "1"


def test_config_defaults_and_overrides(tmp_path):
    cfg = RunConfig.load()
    g = cfg.grid()
    assert (g.K, g.L) == (1024, 100)
    assert g.delay_resolution == pytest.approx(6.25e-9) and g.doppler_resolution == pytest.approx(156.25)
    assert (cfg["mle.p_max"], cfg["mle.n_grad_max"]) == (25, 50)
    c = cfg.cfar()
    assert (c.m_ref, c.n_ref, c.r, c.alpha_os) == (15, 7, 79, 11.39)
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nmle.p_max = 3\ncfar.r = 50\n")
    cfg = RunConfig.load(f, ["cfar.r=60", "sweep.angles=0,45"])
    assert cfg["mle.p_max"] == 3 and cfg["cfar.r"] == 60 and cfg["sweep.angles"] == (0.0, 45.0)
    assert cfg.digest != RunConfig.load().digest
    with pytest.raises(ConfigError):
        RunConfig.load(None, ["nope.key=1"])
    with pytest.raises(ConfigError):
        RunConfig.load(None, ["mle.p_max=abc"])
    assert set(DEFAULTS) == set(RunConfig().values)


def test_synth_size_and_determinism(tmp_path):
    a, b = tmp_path / "a.ctf", tmp_path / "b.ctf"
    assert main(["synth", "--out", str(a), "--frames", "10"]) == 0
    assert a.stat().st_size == 4 + 4 + 4 + 8 + 8 + 4 + 10 * 1024 * 100 * 8
    assert main(["synth", "--out", str(b), "--frames", "10", "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    ta = (tmp_path / "a.ctf.truth.csv").read_text()
    assert ta == (tmp_path / "b.ctf.truth.csv").read_text()
    assert "config_sha256" in ta
    assert len(read_ground_truth(tmp_path / "a.ctf.truth.csv")) == 10


def test_synth_bad_grid_exit_code(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "x"), "--set", "grid.K=0"]) == 1
    assert "K" in capsys.readouterr().err


def test_run_errors(tmp_path, capsys):
    p = tmp_path / "f.ctf"
    assert main(["synth", "--out", str(p), "--frames", "1", *SMALL]) == 0
    assert main(["run", str(p), "--algorithm", "music"]) == 1
    assert "cfar, mle" in capsys.readouterr().err
    (tmp_path / "t.ctf").write_bytes(p.read_bytes()[:1000])
    assert main(["run", str(tmp_path / "t.ctf"), "--algorithm", "cfar"]) == 2
    assert "offset 1000" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ctf"), "--algorithm", "cfar"]) == 2
    assert main(["bogus"]) == 1


def test_run_mle_noiseless_two_paths(tmp_path):
    from delaydoppler.signal_model import PathParams, synthesize_frame

    g = RadarGrid(32, 16, 1e6, 1e-4)
    paths = [PathParams(1.0, 5.3 * g.delay_resolution, 2.4 * g.doppler_resolution),
             PathParams(0.5j, 17.8 * g.delay_resolution, -4.6 * g.doppler_resolution)]
    frames = [synthesize_frame(paths, g).data] * 2
    write_ctf1(tmp_path / "f.ctf", g, frames)
    assert main(["run", str(tmp_path / "f.ctf"), "--algorithm", "mle", "--out", str(tmp_path / "e.csv")]) == 0
    out = rows(tmp_path / "e.csv")
    assert [int(r["frame"]) for r in out] == [0, 0, 1, 1]
    taus = sorted(float(r["tau_s"]) for r in out[:2])
    # CTF1 stores float32, so agreement is at single-precision level
    assert taus[0] == pytest.approx(paths[0].delay, abs=1e-4 * g.delay_resolution)
    assert taus[1] == pytest.approx(paths[1].delay, abs=1e-4 * g.delay_resolution)
    assert "# algorithm = mle" in (tmp_path / "e.csv").read_text()


def _write_estimates(path, truth_csv, shift=0.0, drop=False):
    gt = rows(truth_csv)
    with open(path, "w") as fh:
        fh.write("# algorithm = oracle\nframe,tau_s,alpha_hz,weight_re,weight_im,runtime_s\n")
        if not drop:
            for r in gt:
                fh.write(f"{r['frame']},{float(r['tau_s']) + shift},{r['alpha_hz']},1.0,0.0,\n")


def test_eval_cases(tmp_path):
    p = tmp_path / "f.ctf"
    assert main(["synth", "--out", str(p), "--frames", "4", *SMALL]) == 0
    truth = tmp_path / "f.ctf.truth.csv"
    exact = tmp_path / "exact.csv"
    _write_estimates(exact, truth)
    assert main(["eval", str(exact), str(truth), "--out", str(tmp_path / "r.csv"),
                 "--detail", str(tmp_path / "d.csv")]) == 0
    (r,) = rows(tmp_path / "r.csv")
    assert float(r["det_prob"]) == 1.0 and float(r["delay_rmse_s"]) == 0.0 and float(r["doppler_rmse_hz"]) == 0.0
    assert r["angle_deg"] == "20.0" and r["algorithm"] == "oracle"
    assert len(rows(tmp_path / "d.csv")) == 8

    empty = tmp_path / "empty.csv"
    _write_estimates(empty, truth, drop=True)
    assert main(["eval", str(empty), str(truth), "--out", str(tmp_path / "r0.csv")]) == 0
    (r,) = rows(tmp_path / "r0.csv")
    assert float(r["det_prob"]) == 0.0 and r["delay_rmse_s"] == "" and r["doppler_rmse_hz"] == ""

    shifted = tmp_path / "shift.csv"
    _write_estimates(shifted, truth, shift=0.4 * 6.25e-9)
    probs = []
    for b in ("0.25", "0.5"):
        assert main(["eval", str(shifted), str(truth), "--boundary", b, "--out", str(tmp_path / "rb.csv")]) == 0
        probs.append(float(rows(tmp_path / "rb.csv")[0]["det_prob"]))
    assert probs == [0.0, 1.0]


def test_eval_alignment_error(tmp_path, capsys):
    p = tmp_path / "f.ctf"
    assert main(["synth", "--out", str(p), "--frames", "2", *SMALL]) == 0
    est = tmp_path / "e.csv"
    est.write_text("frame,tau_s,alpha_hz,weight_re,weight_im,runtime_s\n7,1e-8,0.0,1,0,\n")
    assert main(["eval", str(est), str(tmp_path / "f.ctf.truth.csv")]) == 1
    assert "frame 7" in capsys.readouterr().err


def test_sweep_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--angles", "20", "--algorithms", "cfar,mle", "--frames", "3", *SMALL,
                 "--out", str(out)]) == 0
    got = rows(out)
    assert [(r["angle_deg"], r["algorithm"]) for r in got] == [("20.0", "cfar"), ("20.0", "mle")]
    assert all(r["mean_runtime_s"] == "" for r in got)
    assert "config_sha256" in out.read_text()


def test_bench_single_frame(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--frames", "1", "--algorithms", "cfar", *SMALL, "--out", str(out)]) == 0
    (r,) = rows(out)
    assert r["mean_s"] == r["min_s"] == r["max_s"]


def test_spectrum_export(tmp_path):
    p = tmp_path / "f.ctf"
    assert main(["synth", "--out", str(p), "--frames", "1", *SMALL]) == 0
    spec = tmp_path / "spec.csv"
    assert main(["run", str(p), "--algorithm", "cfar", "--out", str(tmp_path / "e.csv"), "--spectrum", str(spec)]) == 0
    got = rows(spec)
    assert len(got) == 256 * 64 and set(got[0]) == {"delay_bin", "doppler_bin", "power"}
