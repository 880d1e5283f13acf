import numpy as np
import pytest

from mmsehbf import harness
from mmsehbf.channel import make_rng, random_channel
from mmsehbf.harness import (
    ExperimentConfig,
    InvalidConfig,
    SweepRecord,
    analytic_mse,
    ber_crossing,
    iterations_to_tolerance,
    qpsk_demodulate,
    qpsk_modulate,
    read_records,
    run_convergence_study,
    run_link_trial,
    run_quantization_study,
    run_sweep,
    write_records,
)
from mmsehbf.mmse import Transceiver, full_digital_mmse

from .conftest import crandn

SMALL = dict(n_tx=8, n_rx=8, trials=3, symbols=200, snr_db=(-10.0, 0.0), outer_cap=10)


# ---- QPSK

def test_qpsk_mapping():
    pts = qpsk_modulate(np.array([[0, 0, 0, 1, 1, 0, 1, 1]]))[0]
    np.testing.assert_allclose(pts, np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2))
    np.testing.assert_allclose(np.abs(pts), 1.0)
    np.testing.assert_array_equal(qpsk_demodulate(np.array([-0.3 + 0.9j])), [1, 0])
    np.testing.assert_array_equal(qpsk_demodulate(np.array([0j])), [0, 0])
    with pytest.raises(ValueError):
        qpsk_modulate(np.array([1, 0, 1]))


def test_qpsk_round_trip(rng):
    bits = rng.integers(0, 2, size=(3, 40), dtype=np.int8)
    np.testing.assert_array_equal(qpsk_demodulate(qpsk_modulate(bits)), bits)


# ---- link simulation

def test_noiseless_full_digital_has_no_errors(rng):
    h = crandn(rng, 1, 4, 4)
    s2 = 1e-12
    stats = run_link_trial(h, full_digital_mmse(h, 2, s2), s2, 10_000, rng)
    assert stats.bit_errors == 0 and stats.bits == 40_000


def test_zero_beamformer_guesses(rng):
    trx = Transceiver(np.zeros((1, 4, 2)), np.zeros((1, 4, 2)), np.ones(1))
    stats = run_link_trial(crandn(rng, 1, 4, 4), trx, 1.0, 20_000, rng)
    assert abs(stats.ber - 0.5) < 3 * np.sqrt(0.25 / stats.bits)


def test_empirical_mse_matches_analytic(rng):
    for i in range(10):
        n = 1 + i % 3
        h = random_channel(make_rng(i), 8, 6, n).per_subcarrier
        v = crandn(rng, n, 8, 2)
        beta = 1 / np.linalg.norm(v, axis=(1, 2))
        trx = Transceiver(v * beta[:, None, None], crandn(rng, n, 6, 2), beta)
        stats = run_link_trial(h, trx, 0.5, 100_000, rng)
        assert abs(stats.mse - analytic_mse(h, trx, 0.5)) < 3 * stats.mse_stderr


# ---- config

def test_config_defaults_and_validation():
    cfg = ExperimentConfig()
    assert (cfg.n_tx, cfg.n_rx, cfg.n_subcarriers) == (16, 16, 1)
    assert cfg.scenario == "narrowband"
    with pytest.raises(InvalidConfig) as exc:
        ExperimentConfig(algorithms=("gevd",), n_subcarriers=4, trials=0)
    keys = {k for _, ks in exc.value.problems for k in ks}
    assert {"algorithms", "n_subcarriers", "trials"} <= keys
    with pytest.raises(InvalidConfig):
        ExperimentConfig(algorithms=("bogus",))
    with pytest.raises(InvalidConfig):
        ExperimentConfig(snr_db=())


def test_record_validation():
    with pytest.raises(ValueError):
        SweepRecord("mo", "mmse", "narrowband", 0.0, "ber", 1.5, 0.0, 1, 0)
    with pytest.raises(ValueError):
        SweepRecord("mo", "mmse", "narrowband", 0.0, "mse", -1.0, 0.0, 1, 0)
    with pytest.raises(ValueError):
        SweepRecord("mo", "mmse", "narrowband", 0.0, "snr", 1.0, 0.0, 1, 0)


# ---- sweeps

def test_full_digital_single_trial(tmp_path):
    cfg = ExperimentConfig(algorithms=("full_digital",), trials=1, snr_db=(0.0,), symbols=100)
    recs = run_sweep(cfg, tmp_path / "s.csv")
    assert sorted(r.metric for r in recs) == ["ber", "mse", "se"]


def test_sweep_structure_and_round_trip(tmp_path):
    cfg = ExperimentConfig(algorithms=("full_digital", "mo", "evd_lb"), **SMALL)
    path = tmp_path / "s.csv"
    recs = run_sweep(cfg, path)
    assert len(recs) == 3 * 2 * 3
    assert path.read_text().splitlines()[0] == "algorithm,criterion,scenario,snr_db,metric,value,stderr,trials,seed"
    assert read_records(path) == recs
    for r in recs:
        assert r.stderr >= 0 and r.trials == 3


def test_sweep_is_bytewise_deterministic_and_parallel_safe(tmp_path, monkeypatch):
    cfg = ExperimentConfig(algorithms=("mo",), n_subcarriers=2, **SMALL)
    run_sweep(cfg, tmp_path / "a.csv")
    monkeypatch.setenv("HBF_THREADS", "2")
    run_sweep(cfg, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_thread_count(monkeypatch):
    monkeypatch.setenv("HBF_THREADS", "x")
    assert harness.thread_count() == 1
    monkeypatch.setenv("HBF_THREADS", "3")
    assert harness.thread_count() == 3


def test_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_records(tmp_path / "missing" / "x.csv", [])


def test_full_digital_bounds_hybrid_ber():
    cfg = ExperimentConfig(algorithms=("full_digital", "mo"), **{**SMALL, "trials": 6})
    recs = run_sweep(cfg)
    for snr in cfg.snr_db:
        fd = harness.lookup(recs, "full_digital", "mse", snr)[0]
        mo = harness.lookup(recs, "mo", "mse", snr)[0]
        assert fd.value <= mo.value + 2 * np.hypot(fd.stderr, mo.stderr)


def test_empirical_mse_check_rows():
    cfg = ExperimentConfig(algorithms=("mo",), **SMALL)
    rows = harness.empirical_mse_check(cfg)
    assert len(rows) == 3 * 2
    for _, _, _, emp, se, ana in rows:
        assert abs(emp - ana) < 4 * se


# ---- convergence and quantization

def test_convergence_study(tmp_path):
    cfg = ExperimentConfig(algorithms=("mo",), inits=("vfd", "random"), **SMALL)
    curves = run_convergence_study(cfg, str(tmp_path / "c.csv"))
    assert len(curves) == 2
    for c in curves:
        assert c.objective.shape == (3, cfg.outer_cap)
        assert np.all(c.iterations <= cfg.outer_cap)
        assert np.all(c.to_one_percent <= c.iterations)
        mean = c.mean_curve()
        assert np.all(np.diff(mean) <= 1e-9)
    summary = (tmp_path / "c_summary.csv").read_text().splitlines()
    assert summary[0].startswith("algorithm,criterion,scenario,init,statistic")
    assert len(summary) == 1 + 2 * 2


def test_iterations_to_tolerance():
    assert iterations_to_tolerance([10.0, 5.0, 1.005, 1.0], 1.0) == 3
    assert iterations_to_tolerance([1.0], 1.0) == 1


def test_quantization_study(tmp_path):
    cfg = ExperimentConfig(algorithms=("mo",), quant_bits=(1, 16), **{**SMALL, "snr_db": (-5.0,)})
    recs = run_quantization_study(cfg, tmp_path / "q.csv")
    assert len(recs) == 3 * 3
    assert (tmp_path / "q.csv").read_text().splitlines()[0].split(",")[4] == "quant_bits"
    ref = harness.lookup(recs, "mo", "mse", quant_bits=None)[0].value
    fine = harness.lookup(recs, "mo", "mse", quant_bits=16)[0].value
    coarse = harness.lookup(recs, "mo", "mse", quant_bits=1)[0].value
    assert abs(fine - ref) < 1e-6 * ref
    assert coarse > ref
    assert read_records(tmp_path / "q.csv") == recs


# ---- analysis helpers

def test_ber_crossing():
    assert ber_crossing([0, 10], [1e-1, 1e-3]) == pytest.approx(5.0)
    assert np.isnan(ber_crossing([0, 10], [1e-1, 5e-2]))


def test_plot_records(tmp_path):
    pytest.importorskip("matplotlib")
    recs = [SweepRecord("mo", "mmse", "narrowband", s, "ber", b, 0.0, 1, 0) for s, b in ((0.0, 0.1), (5.0, 0.01))]
    harness.plot_records(recs, tmp_path / "p.png")
    assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"
