import numpy as np
import pytest

from adnet.dataset import DatasetManifest, SampleRecord

_ACCEPTANCE = {}


def separable_images(n=16, seed=0, side=32):
    """Class 1 is bright on the left half, class 0 on the right half."""
    rng = np.random.default_rng(seed)
    images, records = {}, []
    for i in range(n):
        label = i % 2
        img = rng.random((3, side, side)) * 0.2
        if label:
            img[:, :, : side // 2] += 0.8
        else:
            img[:, :, side // 2:] += 0.8
        key = f"frame{i:03d}.png"
        images[key] = img.astype(np.float32)
        records.append(
            SampleRecord(key, "synthetic", ("no-billboard", "billboard")[label], "train",
                         0.5 if label else 0.0)
        )
    return images, DatasetManifest(records, seed, 0.5)


@pytest.fixture
def separable():
    images, manifest = separable_images()
    return images, manifest, (lambda r: images[r.image_id])


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
