import numpy as np
import pytest

from zfnad.recon import MedianReconstructor, ReconPair
from zfnad.synth import WIDE_MARGIN, SynthSpec, generate
from zfnad.tensor import ImageTensor


def gray(values) -> ImageTensor:
    return ImageTensor(np.asarray(values, dtype=np.float32))


def pair(a, b, label=None, image_id="x") -> ReconPair:
    a = a if isinstance(a, ImageTensor) else gray(a)
    b = b if isinstance(b, ImageTensor) else gray(b)
    return ReconPair(a, b, label, image_id)


@pytest.fixture(scope="session")
def small_synth():
    """Default wide-margin scene with a short test split, plus its reconstructor."""
    spec = SynthSpec.from_dict({**WIDE_MARGIN.to_dict(), "test_normals": 4, "test_abnormals": 6})
    ds = generate(spec)
    return ds, MedianReconstructor(ds.train)


@pytest.fixture(scope="session")
def synth_pairs(small_synth):
    ds, rec = small_synth
    test = [ReconPair(img, rec(img), lab, img.meta["image_id"]) for img, lab in zip(ds.test, ds.labels)]
    mask = [ReconPair(img, rec(img), 0, img.meta["image_id"]) for img in ds.mask]
    return test, mask


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
