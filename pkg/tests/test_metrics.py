import math

import numpy as np
import pytest

from sssrdist.audio_io import TimeSignal
from sssrdist.metrics import (
    SI_SDR_CEILING_DB,
    EvaluationRow,
    MetricAdapter,
    MetricError,
    adapter_versions,
    composite_scores,
    evaluate_utterance,
    get_adapter,
    mean_row,
    pesq_score,
    register_adapter,
    si_sdr,
    stoi_score,
    write_evaluation_csv,
)

from oracles import si_sdr_direct


def test_si_sdr_identity_and_scale(clean_noisy):
    s, x = clean_noisy
    assert si_sdr(s, s) == SI_SDR_CEILING_DB
    assert si_sdr(s, TimeSignal(0.3 * s.samples, 16000)) == si_sdr(s, s)
    base = si_sdr(s, x)
    for alpha in (0.1, 1.0, 10.0):
        assert si_sdr(s, alpha * x.samples) == pytest.approx(base, abs=1e-6)


def test_si_sdr_matches_direct_oracle(clean_noisy):
    s, x = clean_noisy
    assert si_sdr(s, x) == pytest.approx(si_sdr_direct(s.samples, x.samples), abs=1e-9)


def test_si_sdr_equal_energy_noise():
    rng = np.random.default_rng(0)
    s = rng.standard_normal(8000)
    values = []
    for _ in range(100):
        n = rng.standard_normal(8000)
        n *= np.linalg.norm(s) / np.linalg.norm(n)
        values.append(si_sdr(s, s + n))
    assert all(abs(v) < 0.5 for v in values)


def test_si_sdr_monotone_in_noise(clean_noisy, rng):
    s, _ = clean_noisy
    n = rng.standard_normal(len(s))
    vals = [si_sdr(s, s.samples + g * n) for g in (0.001, 0.01, 0.1, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_si_sdr_errors(clean_noisy):
    s, _ = clean_noisy
    with pytest.raises(MetricError):
        si_sdr(np.zeros(100), np.ones(100))
    assert si_sdr(s, np.zeros(len(s))) == -math.inf
    with pytest.raises(MetricError):
        si_sdr(s, np.zeros(10))


def test_pesq_and_stoi_adapters(clean_noisy):
    s, x = clean_noisy
    assert stoi_score(s, s) == pytest.approx(1.0, abs=1e-6)
    p_noisy = pesq_score(s, x)
    assert p_noisy is not None and -0.5 <= p_noisy <= 4.5
    assert pesq_score(s, s) > p_noisy
    versions = adapter_versions()
    assert versions["pesq"]["available"] and versions["pesq"]["version"]
    assert set(versions) >= {"pesq", "stoi", "composite"}


def test_missing_adapter_is_explicit(clean_noisy):
    s, x = clean_noisy
    if get_adapter("composite").available():
        pytest.skip("composite evaluator installed")
    assert composite_scores(s, x) == {"csig": None, "cbak": None, "covl": None}


def test_adapter_registry_custom(clean_noisy):
    s, x = clean_noisy
    register_adapter(MetricAdapter("composite", "numpy", lambda r, e, sr: {"csig": 3.0, "cbak": 2.0, "covl": 2.5},
                                   ("csig", "cbak", "covl")))
    try:
        row = evaluate_utterance(s, x, "u")
        assert (row.csig, row.cbak, row.covl) == (3.0, 2.0, 2.5)
    finally:
        from sssrdist.metrics import _composite

        register_adapter(MetricAdapter("composite", "pysepm", _composite, ("csig", "cbak", "covl")))


def test_evaluate_utterance(clean_noisy):
    s, x = clean_noisy
    same = evaluate_utterance(s, s, "same")
    assert same.stoi == pytest.approx(1.0, abs=1e-6)
    assert same.si_sdr == SI_SDR_CEILING_DB
    row = evaluate_utterance(s, x, "noisy")
    assert row.pesq is not None and row.stoi is not None and row.si_sdr is not None
    for value in row.values().values():
        assert value is None or math.isfinite(value)


def test_evaluate_zero_estimate_is_absent(clean_noisy):
    s, _ = clean_noisy
    row = evaluate_utterance(s, TimeSignal(np.zeros(len(s)), 16000), "z", metrics=("si_sdr",))
    assert row.si_sdr is None


def test_mean_row_and_csv(tmp_path):
    rows = [EvaluationRow("a", pesq=2.0, si_sdr=5.0), EvaluationRow("b", pesq=3.0)]
    m = mean_row(rows)
    assert m["pesq"] == 2.5 and m["si_sdr"] == 5.0 and m["stoi"] is None
    write_evaluation_csv(rows, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "utterance_id,pesq,stoi,csig,cbak,covl,si_sdr"
    assert lines[2] == "b,3.0,,,,,"
