import numpy as np
import pytest
import torch

from sssrdist.audio_io import TimeSignal
from sssrdist.representations import load_backend
from sssrdist.synthetic import colored_noise, mix_at_snr, speechlike

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def hubert_small():
    """HuBERT geometry (FE 512, OL 768) with two transformer layers, seeded weights."""
    return load_backend("hubert", "random-small:0")


@pytest.fixture(scope="session")
def hubert_small64():
    return load_backend("hubert", "random-small:0", dtype=torch.float64)


@pytest.fixture(scope="session")
def xlsr_small():
    return load_backend("xlsr", "random-small:0")


@pytest.fixture(scope="session")
def clean_noisy():
    rng = np.random.default_rng(7)
    s = speechlike(rng, 1.0)
    v = colored_noise(rng, len(s))
    x = TimeSignal(mix_at_snr(s.samples, v, 5.0), s.sample_rate)
    return s, x


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
