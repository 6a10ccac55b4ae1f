import numpy as np
import pytest

from zfnad.localize import PatchConfig, make_candidates
from zfnad.maskweight import WeightMask, build_mask
from zfnad.metrics import (
    MetricRecord,
    MetricTable,
    collect,
    collect_table,
    image_feature_names,
    image_level,
    patch_level,
    pixel_level,
    schema_for,
)
from zfnad.pipeline import seeds_in_zone
from zfnad.recon import ReconPair, SidecarLosses
from zfnad.tensor import DiffMap, abs_diff, aggregate

from conftest import gray, pair

SMALL = PatchConfig(p=10, n=2, alpha=4, q=20)


def rand_pair(seed, size=24, label=0, image_id=None):
    rng = np.random.default_rng(seed)
    return pair(rng.random((size, size)), rng.random((size, size)), label, image_id or f"id{seed:03d}")


class TestSchema:
    def test_counts(self):
        assert len(image_feature_names()) == 13
        assert len(schema_for(True)) == 181
        assert len(schema_for(False)) == 13 + 84
        assert len(set(schema_for(True))) == 181

    def test_naming(self):
        names = schema_for(True)
        assert "raw.patch.frechet.q3" in names and "msk.pix.sum" in names and "img.diff.median" in names
        assert not any(n.startswith("msk.") for n in schema_for(False))


class TestImageLevel:
    def test_identical(self):
        x = gray(np.random.default_rng(0).random((40, 40)))
        f = image_level(pair(x, x))
        assert f["img.mse"] == 0 and f["img.keypoint"] == 0 and f["img.diff.sum"] == 0
        assert f["img.perceptual"] == 0

    def test_sidecar_missing(self):
        f = image_level(rand_pair(1))
        assert f["img.quant_loss"] is None and f["img.disc_orig"] is None and f["img.disc_recon"] is None

    def test_sidecar_passthrough(self):
        p = rand_pair(1)
        sc = SidecarLosses(0.07, -0.2, -1.1, 0.5)
        f = image_level(ReconPair(p.original, p.reconstruction, 0, "s", sc))
        assert (f["img.quant_loss"], f["img.disc_orig"], f["img.disc_recon"], f["img.perceptual"]) == \
            (0.07, -0.2, -1.1, 0.5)

    def test_two_pixel_diff(self):
        f = image_level(pair([[0.5], [0.5]], [[0.4], [0.2]]))
        assert f["img.diff.mean"] == pytest.approx(0.2, abs=1e-7)
        assert f["img.diff.max"] == pytest.approx(0.3, abs=1e-7)


class TestPixelLevel:
    def test_zero(self):
        assert all(v == 0 for v in pixel_level(DiffMap(np.zeros((4, 4))), 5).values())

    def test_top_two(self):
        f = pixel_level(DiffMap(np.array([[0.5, 0.9, 0.1]])), 2)
        assert f["pix.sum"] == pytest.approx(1.4, abs=1e-7)
        assert f["pix.min"] == np.float32(0.5)

    def test_all_pixels_equal_image_aggregates(self):
        d = DiffMap(np.random.default_rng(2).random((5, 6)))
        f = pixel_level(d, 30)
        assert {k[4:]: v for k, v in f.items()} == aggregate(d.values).as_dict()

    def test_p_too_large(self):
        with pytest.raises(ValueError):
            pixel_level(DiffMap(np.zeros((2, 2))), 5)


class TestPatchLevel:
    def test_identical(self):
        x = np.random.default_rng(0).random((20, 20))
        cands = make_candidates((8, 8), SMALL, (20, 20))
        f = patch_level(cands, pair(x, x))
        assert len(f) == 70
        assert f["patch.euclidean.sum"] == 0 and f["patch.ssim.min"] == 1

    def test_singleton(self):
        p = rand_pair(3, 20)
        (c,) = make_candidates((8, 8), PatchConfig(p=1, n=1, alpha=4, q=1), (20, 20))[:1]
        f = patch_level([c], p)
        for kind in ("euclidean", "wasserstein", "frechet"):
            vals = {f[f"patch.{kind}.{a}"] for a in ("max", "min", "mean", "q1", "median", "q3", "sum")}
            assert len(vals) == 1

    def test_wasserstein_median_oracle(self):
        p = rand_pair(4, 20)
        cands = make_candidates((9, 9), PatchConfig(p=1, n=1, alpha=4, q=1), (20, 20))[:3]
        f = patch_level(cands, p)
        g0, g1 = p.original.gray(), p.reconstruction.gray()
        vals = []
        for c in cands:
            t, l, b, r = c.bounds
            u, v = np.sort(g0[t:b, l:r].ravel()), np.sort(g1[t:b, l:r].ravel())
            vals.append(float(np.mean(np.abs(u - v))))
        assert f["patch.wasserstein.median"] == sorted(vals)[1]

    def test_empty(self):
        with pytest.raises(ValueError):
            patch_level([], rand_pair(0))


class TestCollect:
    def test_no_mask(self):
        r = collect(rand_pair(5, 40), None, SMALL)
        assert list(r.features) == schema_for(False)

    def test_ones_mask_matches_raw(self):
        r = collect(rand_pair(6, 40), WeightMask(np.ones((40, 40)), 2), SMALL)
        assert list(r.features) == schema_for(True)
        for name in r.features:
            if name.startswith("msk."):
                assert r.features[name] == r.features["raw." + name[4:]], name

    def test_mask_dims(self):
        with pytest.raises(ValueError):
            collect(rand_pair(6, 40), WeightMask(np.ones((20, 20)), 2), SMALL)

    def test_masked_zone_lowers_pix_sum(self, small_synth, synth_pairs):
        ds, _ = small_synth
        test, mask_pairs = synth_pairs
        mask = build_mask(mask_pairs)
        zone = ds.spec.high_variation_zone
        cfg = PatchConfig()
        checked = 0
        for p in test:
            if seeds_in_zone(abs_diff(p.original, p.reconstruction).values, cfg.p, zone) == 0:
                continue
            r = collect(p, mask, cfg)
            assert r.features["msk.pix.sum"] < r.features["raw.pix.sum"]
            checked += 1
        assert checked > 0

    def test_record_validation(self):
        with pytest.raises(ValueError):
            MetricRecord("a", 2, {})
        with pytest.raises(ValueError):
            MetricRecord("a", 0, {"x": float("nan")})


class TestTable:
    def test_order_invariant_and_byte_identical(self, tmp_path):
        pairs = [rand_pair(s, 40, s % 2) for s in (7, 3, 9, 1)]
        mask = WeightMask(np.random.default_rng(0).random((40, 40)), 2)
        t1 = collect_table(pairs, mask, SMALL)
        t2 = collect_table(pairs[::-1], mask, SMALL, threads=3)
        assert t1.ids == sorted(t1.ids)
        t1.to_csv(tmp_path / "a.csv")
        t2.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_csv_round_trip_exact(self, tmp_path):
        pairs = [rand_pair(s, 40, s % 2) for s in range(3)]
        t = collect_table(pairs, None, SMALL)
        t.to_csv(tmp_path / "m.csv")
        header = (tmp_path / "m.csv").read_text().splitlines()[0].split(",")
        assert header[:2] == ["image_id", "label"]
        back = MetricTable.from_csv(tmp_path / "m.csv")
        assert back.schema == t.schema and back.ids == t.ids
        a, b = t.matrix(), back.matrix()
        assert np.array_equal(np.isnan(a), np.isnan(b))
        assert np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])
        assert back.records[0].features["img.quant_loss"] is None

    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            collect_table([rand_pair(1, 40), rand_pair(1, 40)], None, SMALL)

    def test_schema_mismatch(self):
        with pytest.raises(ValueError):
            MetricTable([MetricRecord("a", 0, {"x": 1.0}), MetricRecord("b", 1, {"y": 1.0})])
