"""测试运行配置"""

import math

from ion_autocorr.config import Config, threads_from_env
from ion_autocorr.dynamics import IntegratorConfig


def test_defaults_match_integrator():
    cfg = IntegratorConfig()
    assert Config.DEFAULTS["rel_tol"] == cfg.rel_tol
    assert Config.DEFAULTS["abs_tol"] == cfg.abs_tol
    assert Config.DEFAULTS["t_span_sigmas"] == cfg.t_span_sigmas
    assert Config.DEFAULTS["chunk_size"] == cfg.chunk_size
    assert math.isinf(Config.DEFAULTS["max_step_ps"])


def test_parameter_names():
    names = Config.parameter_names()
    assert {"sigma_ps", "gdd_ps2", "intensity", "nu_khz", "n_phase"} <= names
    assert "unknown" not in names


def test_threads_round_trip():
    original = Config.get_threads()
    try:
        Config.set_threads(3)
        assert Config.get_threads() == 3
        Config.set_threads(0)
        assert Config.get_threads() == 1
    finally:
        Config.set_threads(original)


def test_validate():
    assert Config.validate()


def test_threads_from_env(monkeypatch):
    monkeypatch.delenv("ION_AUTOCORR_THREADS", raising=False)
    assert threads_from_env(4) == 4
    monkeypatch.setenv("ION_AUTOCORR_THREADS", " 6 ")
    assert threads_from_env(4) == 6
    monkeypatch.setenv("ION_AUTOCORR_THREADS", "0")
    assert threads_from_env(4) == 1


def test_threads_from_env_falls_back_on_garbage(monkeypatch, caplog):
    monkeypatch.setenv("ION_AUTOCORR_THREADS", "auto")
    assert threads_from_env(4) == 4
    assert "ION_AUTOCORR_THREADS" in caplog.text


def test_kick_train_defaults():
    assert Config.DEFAULTS["n_cpp"] == 2
    assert Config.DEFAULTS["aligned_kicks"] is True
    assert Config.DEFAULTS["n_dip_energies"] == 0
