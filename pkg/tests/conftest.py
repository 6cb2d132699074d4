from __future__ import annotations

import numpy as np
import pytest

from freqseg import nifti_io
from freqseg.fuse import ProbVolume
from freqseg.volgrid import ScalarVolume, VoxelGeometry


@pytest.fixture
def rng():
    return np.random.default_rng(20251016)


@pytest.fixture
def geometry():
    affine = np.array(
        [
            [-1.0, 0.0, 0.0, 120.0],
            [0.0, -1.0, 0.0, 130.0],
            [0.0, 0.0, 1.2, -70.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return VoxelGeometry((12, 10, 6), (1.0, 1.0, 1.2), affine)


def random_probs(rng, dims, classes):
    raw = rng.random(tuple(dims) + (classes,)) + 1e-3
    return raw / raw.sum(axis=-1, keepdims=True)


def prob_volume(rng, dims=(8, 8, 8), classes=5) -> ProbVolume:
    return ProbVolume(VoxelGeometry(dims), random_probs(rng, dims, classes))


@pytest.fixture
def write_case(tmp_path):
    """Write a synthetic four-modality case directory and return its path."""

    def make(case_id="CASE-001", dims=(24, 20, 6), skip=(), seed=0):
        gen = np.random.default_rng(seed)
        case_dir = tmp_path / case_id
        case_dir.mkdir()
        geom = VoxelGeometry(dims, (1.0, 1.0, 1.5))
        for k, mod in enumerate(("t1n", "t1c", "t2w", "t2f")):
            if mod in skip:
                continue
            data = gen.normal(100.0 + 10 * k, 15.0, dims)
            nifti_io.write_scalar(case_dir / f"{case_id}-{mod}.nii.gz", ScalarVolume(geom, data))
        return case_dir

    return make


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per @pytest.mark.criterion test
# ---------------------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "FAIL"
        if number in _CRITERIA and _CRITERIA[number][0] == "FAIL":
            status = "FAIL"
        _CRITERIA[number] = (status, f"{title} ({rep.duration:.2f} s)")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, text = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {text}")
