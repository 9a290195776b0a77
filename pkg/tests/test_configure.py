#!/usr/bin/env python3

import logging
import os

import pytest

from ballprob.configure import (
    THREADS_ENV,
    CorpusConfig,
    InversionConfig,
    RunConfig,
    SearchConfig,
    thread_count_from_env,
)
from tests.utils.instance_generators import generate_identity_law

log = logging.getLogger("BP.test")
log.setLevel("ERROR")
log.parent.setLevel("ERROR")


def test_inversion_config_validation():
    checks = [
        {"abs_tol": 0.0},
        {"abs_tol": -1e-6},
        {"max_freq": 0.0},
        {"max_terms": 0},
        {"block_size": 0},
    ]
    for overrides in checks:
        with pytest.raises(ValueError):
            InversionConfig(**overrides)


def test_inversion_config_replace():
    cfg = InversionConfig(abs_tol=1e-7, max_terms=100)
    other = cfg.replace(abs_tol=1e-5)
    assert other.abs_tol == 1e-5
    assert other.max_terms == 100
    assert cfg.abs_tol == 1e-7


def test_run_config_tolerance_per_law():
    cfg = RunConfig(subcommand="cdf", threads=1)
    assert cfg.inversion_config(generate_identity_law(3)).abs_tol == 1e-6
    assert cfg.inversion_config(generate_identity_law(1)).abs_tol == 1e-5
    cfg = RunConfig(subcommand="cdf", abs_tol=1e-8, threads=1)
    assert cfg.inversion_config(generate_identity_law(1)).abs_tol == 1e-8


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(subcommand="cdf", abs_tol=0.0)
    with pytest.raises(ValueError):
        RunConfig(subcommand="cdf", output_format="xml")


def test_search_and_corpus_validation():
    for overrides in [{"grid_size": 2}, {"refine_rounds": -1}, {"std_span": 0.0}]:
        with pytest.raises(ValueError):
            SearchConfig(**overrides)
    for overrides in [
        {"n_instances": 0},
        {"dim_range": (1, 4)},
        {"dim_range": (5, 4)},
        {"shift_fraction": (0.5, 0.1)},
        {"perturb_prob": 1.5},
    ]:
        with pytest.raises(ValueError):
            CorpusConfig(**overrides)


def test_thread_count_from_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count_from_env() == 3
    assert RunConfig(subcommand="sweep").threads == 3
    monkeypatch.setenv(THREADS_ENV, "0")
    assert thread_count_from_env() == (os.cpu_count() or 1)
    monkeypatch.setenv(THREADS_ENV, "many")
    assert thread_count_from_env() == (os.cpu_count() or 1)
    monkeypatch.delenv(THREADS_ENV)
    assert thread_count_from_env() == (os.cpu_count() or 1)
