import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmsehbf.config import ConfigError, parse_config, read_config, serialize, to_json
from mmsehbf.harness import ExperimentConfig


def test_minimal_config_uses_defaults():
    cfg = parse_config("")
    assert (cfg.n_tx, cfg.n_rx, cfg.n_subcarriers) == (16, 16, 1)
    assert cfg == ExperimentConfig()


def test_full_grammar():
    cfg = parse_config("""
        # comment line
        trials = 7            # keys before any section are allowed
        [system]
        n_tx = 32
        n_subcarriers = 8
        [experiment]
        snr_db = -20, -10.5, 0
        algorithm = MO, evd-lb
        init = vfd, random
        quant_bits =
    """)
    assert cfg.trials == 7 and cfg.n_tx == 32
    assert cfg.snr_db == (-20.0, -10.5, 0.0)
    assert cfg.algorithms == ("mo", "evd_lb")
    assert cfg.inits == ("vfd", "random")
    assert cfg.quant_bits == ()


def test_gevd_broadband_error_names_both_keys():
    with pytest.raises(ConfigError) as exc:
        parse_config("[system]\nn_subcarriers = 64\n[experiment]\nalgorithm = gevd\n")
    msg = str(exc.value)
    assert "GEVD requires narrowband" in msg
    assert "line 2 (n_subcarriers)" in msg and "line 4 (algorithm)" in msg


@pytest.mark.parametrize("text, fragment", [
    ("[nope]\n", "unknown section"),
    ("[system\n", "malformed section"),
    ("n_tx 16\n", "expected 'key = value'"),
    ("colour = red\n", "unknown key 'colour'"),
    ("[channel]\nn_tx = 4\n", "belongs in [system]"),
    ("n_tx = 4\nn_tx = 5\n", "duplicate key"),
    ("n_tx = four\n", "bad value for 'n_tx'"),
    ("trials = 0\n", "trials must be a positive integer"),
])
def test_errors_carry_line_numbers(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)
    assert "line" in str(exc.value) or "trials" in str(exc.value)


def test_all_errors_reported_at_once():
    with pytest.raises(ConfigError) as exc:
        parse_config("a = 1\nb = 2\nn_tx = x\n")
    assert len(exc.value.errors) == 3


def test_read_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="missing.cfg"):
        read_config(tmp_path / "missing.cfg")


def test_read_config_prefixes_path(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("n_tx = x\n")
    with pytest.raises(ConfigError, match="bad.cfg: line 1"):
        read_config(p)


@given(
    st.integers(2, 64), st.integers(1, 16),
    st.lists(st.floats(-40, 40, allow_nan=False), min_size=1, max_size=4),
    st.lists(st.sampled_from(["mo", "evd_lb", "omp", "full_digital"]), min_size=1, max_size=3, unique=True),
    st.lists(st.integers(1, 16), max_size=3),
    st.floats(1e-12, 1e-2), st.sampled_from(["mmse", "wmmse"]),
)
def test_round_trip(n_tx, n_sub, snrs, algs, qbits, tol, crit):
    cfg = ExperimentConfig(n_tx=n_tx, n_rx=n_tx, n_rf=2, n_subcarriers=n_sub, snr_db=tuple(snrs),
                           algorithms=tuple(algs), quant_bits=tuple(qbits), outer_tol=tol, criterion=crit)
    back = parse_config(serialize(cfg))
    assert back == cfg
    assert serialize(back) == serialize(cfg)


def test_json_export_is_sorted():
    text = to_json(ExperimentConfig())
    assert text.endswith("\n") and '"algorithms"' in text
