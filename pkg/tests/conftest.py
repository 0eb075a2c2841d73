import numpy as np
import pytest

from radardepth.geometry import CameraIntrinsics

ACCEPTANCE_LINES: list[str] = []

# (invert_class_weights, negatives_include_uncovered) settings trained on the standard set
GRID = [(False, False), (True, False), (False, True), (True, True)]
GRID_EPOCHS = 10


def grid_name(invert: bool, uncovered: bool) -> str:
    weights = "inverted" if invert else "default"
    negatives = "covered+uncovered" if uncovered else "covered-only"
    return f"weights={weights} negatives={negatives}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cam():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=200.0, cy=96.0, width=400, height=192)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cam():
    """160x64 camera; a 20 degree window spans 24 rows."""
    return CameraIntrinsics(fx=66.0, fy=66.0, cx=79.5, cy=32.0, width=160, height=64)


@pytest.fixture(scope="session")
def standard_set():
    from radardepth.synth import standard_dataset

    return standard_dataset(seed=0)


@pytest.fixture(scope="session")
def trained_grid(standard_set):
    """One estimator per class-weight / negative-set reading, default lr, 10 epochs."""
    from radardepth.pipeline import LateFusionDepthEstimator

    models = {}
    for invert, uncovered in GRID:
        est = LateFusionDepthEstimator(epochs=GRID_EPOCHS, seed=0, invert_class_weights=invert,
                                       negatives_include_uncovered=uncovered)
        models[(invert, uncovered)] = est.fit(standard_set["train"], X_val=standard_set["val"])
    return models
