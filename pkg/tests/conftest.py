import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vcrobust.signal_io import Waveform

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FS = 16000


def sine(freq=440.0, dur=1.0, amp=0.5, fs=FS, phase=0.0):
    t = np.arange(int(round(dur * fs))) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), fs)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    from vcrobust.harness.corpus import generate_synthetic_corpus
    return generate_synthetic_corpus(3, 4, 2, tmp_path_factory.mktemp("corpus"), n_prior_speakers=6, n_prior_utts=3)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Recorder for acceptance-criterion outcomes: ``acceptance(n, ok, text)``."""

    def record(number, ok, text):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
