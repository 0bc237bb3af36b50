import numpy as np
import pytest

from drumaware.features import AudioClip, FeatureConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_feature_config():
    # two cheap resolutions keep feature extraction fast in unit tests
    return FeatureConfig(window_sizes=(512, 1024), bands_per_octave=(2, 3))


def noise_clip(seconds=1.0, sr=44100, seed=0, amp=0.3):
    r = np.random.default_rng(seed)
    return AudioClip(amp * r.uniform(-1, 1, int(seconds * sr)), sr)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion that ran
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
