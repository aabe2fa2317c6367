import numpy as np
import pytest

from keyclink.demodulation import load_wordlist
from keyclink.synthcorpus import appendix_passphrases, synth_recording


@pytest.fixture(scope="session")
def wl():
    return load_wordlist()


@pytest.fixture(scope="session")
def phrases():
    return appendix_passphrases()


@pytest.fixture(scope="session")
def clean_sample():
    return synth_recording("taco ferret circle deliverer", kit_seed=0, snr_db=np.inf, rng=7)


@pytest.fixture(scope="session")
def noisy_sample():
    return synth_recording("taco ferret circle deliverer", kit_seed=1, snr_db=20, rng=8)


# acceptance criteria report one line each in the terminal summary
CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    def record(number: int, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
