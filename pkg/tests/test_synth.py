import json

import numpy as np
import pytest

from zfnad.maskweight import apply_mask, build_mask
from zfnad.pipeline import seeds_in_zone
from zfnad.recon import MedianReconstructor, ingest_pairs
from zfnad.synth import DEFAULT_SPEC, NARROW_MARGIN, WIDE_MARGIN, SynthSpec, generate, write_dataset
from zfnad.tensor import abs_diff


def spec(**kw):
    return SynthSpec.from_dict({**DEFAULT_SPEC.to_dict(), **kw})


def test_zero_variation_normals_identical():
    ds = generate(spec(jitter_sigma=0.0, noise_sigma=0.0, high_variation_zone=None,
                       train_normals=3, mask_normals=2, test_normals=3, test_abnormals=0))
    first = ds.train[0].data
    assert all(np.array_equal(img.data, first) for img in ds.train + ds.mask + ds.test)


def test_same_seed_bit_identical():
    a, b = generate(spec(seed=5)), generate(spec(seed=5))
    for x, y in zip(a.train + a.mask + a.test, b.train + b.mask + b.test):
        assert x.data.tobytes() == y.data.tobytes()
    assert a.labels == b.labels
    assert {k: v.to_dict() for k, v in a.truth.items()} == {k: v.to_dict() for k, v in b.truth.items()}
    c = generate(spec(seed=6))
    assert c.test[0].data.tobytes() != a.test[0].data.tobytes()


def test_missing_defect_argmax_in_box():
    ds = generate(spec(defect_kinds=("missing",), high_variation_zone=None, test_normals=0, test_abnormals=8))
    rec = MedianReconstructor(ds.train)
    for img in ds.test:
        d = abs_diff(img, rec(img)).values
        r, c = np.unravel_index(int(np.argmax(d)), d.shape)
        t, l, b, rr = ds.truth[img.meta["image_id"]].boxes[0]
        assert t <= r < b and l <= c < rr


def test_ground_truth_shape():
    ds = generate(DEFAULT_SPEC)
    for image_id, label in zip(ds.test_ids, ds.labels):
        boxes = ds.truth[image_id].boxes
        assert (len(boxes) >= 1) == (label == 1)
    kinds = [ds.truth[i].kinds[0] for i, l in zip(ds.test_ids, ds.labels) if l]
    assert set(kinds) == {"shift", "missing", "bridge"}


def test_margin_presets():
    assert WIDE_MARGIN.defect_magnitude >= 5 * max(WIDE_MARGIN.jitter_sigma, WIDE_MARGIN.noise_sigma)
    assert WIDE_MARGIN.defect_magnitude > 3 * WIDE_MARGIN.jitter_sigma
    assert NARROW_MARGIN.defect_magnitude == 1.5 * NARROW_MARGIN.jitter_sigma


@pytest.mark.parametrize("bad", [
    {"image_size": 8},
    {"mask_normals": 1},
    {"high_variation_zone": (50, 50, 70, 70)},
    {"defect_kinds": ("scratch",)},
    {"component_shape": (80, 10)},
    {"defect_magnitude": 0.0},
])
def test_invalid_spec(bad):
    with pytest.raises(ValueError):
        spec(**bad)


def test_zone_attracts_and_mask_repels():
    ds = generate(DEFAULT_SPEC)
    rec = MedianReconstructor(ds.train)
    from zfnad.recon import ReconPair

    mask = build_mask([ReconPair(i, rec(i), 0) for i in ds.mask])
    zone = DEFAULT_SPEC.high_variation_zone
    off = on = 0
    for img in ds.test:
        d = abs_diff(img, rec(img))
        off += seeds_in_zone(d.values, 100, zone)
        on += seeds_in_zone(apply_mask(d, mask).values, 100, zone)
    assert on < off
    assert off > 0


def test_write_dataset(tmp_path):
    ds = generate(spec(train_normals=3, mask_normals=2, test_normals=2, test_abnormals=2))
    paths = write_dataset(ds, tmp_path)
    test = ingest_pairs(paths["test_manifest"])
    assert [p.image_id for p in test] == ds.test_ids
    assert [p.label for p in test] == ds.labels
    for p, img in zip(test, ds.test):
        assert p.original.data.tobytes() == img.data.tobytes()
    assert len(ingest_pairs(paths["mask_manifest"])) == 2
    gt = json.loads(paths["ground_truth"].read_text())
    assert gt["spec"]["seed"] == 0
    assert len(gt["images"]) == 4
