import numpy as np
import pytest
from hypothesis import settings

from curriculum_teacher.data import split, standardize, synth_blobs

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_splits():
    """Standardized 4-class blobs, 60 rows per class."""
    splits, _ = standardize(split(synth_blobs(4, 60, 8, 0.8, seed=0), seed=0))
    return splits


@pytest.fixture(scope="session")
def tiny_cfg_text():
    return "\n".join([
        "data.n_per_class = 40",
        "curriculum.n_batches = 8",
        "curriculum.epochs = 3",
        "experiment.n_students = 2",
        "experiment.iterations = 15",
        "student.learning_rate = 0.02",
        "student.hidden_nodes = 10",
    ]) + "\n"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
