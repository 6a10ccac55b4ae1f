import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zfnad.recon import (
    DELTA,
    LossInputs,
    ManifestError,
    MedianReconstructor,
    ReconPair,
    SidecarLosses,
    adaptive_lambda,
    baseline_reconstruct,
    gan_loss,
    ingest_pairs,
    total_loss,
    vq_loss,
    vq_loss_from_mse,
    write_manifest,
)
from zfnad.tensor import abs_diff, save_png, save_tensor

from conftest import gray, pair


class TestBaselineReconstruct:
    def test_single_training_image(self):
        x = gray(np.random.default_rng(0).random((3, 3)))
        other = gray(np.zeros((3, 3)))
        assert np.array_equal(baseline_reconstruct([x], other).data, x.data)

    def test_median_of_three(self):
        train = [gray([[v]]) for v in (0.1, 0.9, 0.2)]
        assert baseline_reconstruct(train, gray([[0.5]])).data[0, 0, 0] == np.float32(0.2)

    def test_errors(self):
        with pytest.raises(ValueError):
            baseline_reconstruct([], gray([[0.0]]))
        with pytest.raises(ValueError):
            baseline_reconstruct([gray([[0.0, 0.0]])], gray([[0.0]]))

    def test_defect_is_recovered(self, small_synth):
        ds, rec = small_synth
        i = ds.labels.index(1)
        img = ds.test[i]
        out = rec(img)
        stack = np.stack([t.data for t in ds.train])
        assert np.array_equal(out.data, np.median(stack, axis=0).astype(np.float32))
        t, l, b, r = ds.truth[img.meta["image_id"]].boxes[0]
        assert abs_diff(img, out).values[t:b, l:r].max() > 0.3

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, seed, rnd):
        rng = np.random.default_rng(seed)
        train = [gray(rng.random((4, 5))) for _ in range(int(rng.integers(1, 7)))]
        shuffled = list(train)
        rnd.shuffle(shuffled)
        a = baseline_reconstruct(train, train[0]).data
        b = baseline_reconstruct(shuffled, train[0]).data
        assert a.tobytes() == b.tobytes()

    def test_reconstructor_matches_function(self):
        rng = np.random.default_rng(2)
        train = [gray(rng.random((3, 3))) for _ in range(5)]
        x = gray(rng.random((3, 3)))
        assert np.array_equal(MedianReconstructor(train)(x).data, baseline_reconstruct(train, x).data)


class TestLosses:
    def test_vq_zero(self):
        x = gray([[0.2, 0.4]])
        assert vq_loss(LossInputs([0.5, 0.1], [0.5, 0.1]), pair(x, x)) == 0.0

    def test_vq_one_dim(self):
        x = gray([[0.2]])
        assert vq_loss(LossInputs([0.0], [1.0]), pair(x, x)) == 2.0

    def test_vq_with_pixel_error(self):
        # mse([0,0],[1,0]) = 0.5, plus 2 + 2 from the two latent terms
        p = pair([[0.0, 0.0]], [[1.0, 0.0]])
        assert abs(vq_loss(LossInputs([0, 0], [1, 1]), p) - 4.5) <= 1e-12
        assert vq_loss_from_mse(0.5, LossInputs([0, 0], [1, 1])) == 4.5

    def test_vq_length_mismatch(self):
        with pytest.raises(ValueError):
            LossInputs([0.0], [1.0, 2.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=6), st.integers(0, 2**31 - 1))
    def test_vq_nonnegative_zero_iff_equal(self, enc, seed):
        rng = np.random.default_rng(seed)
        x = gray(rng.random((2, 2)))
        li = LossInputs(enc, enc)
        assert vq_loss(li, pair(x, x)) == 0.0
        moved = list(enc)
        moved[0] += 0.5
        assert vq_loss(LossInputs(enc, moved), pair(x, x)) > 0
        y = gray(np.clip(x.data[:, :, 0] + 0.1, 0, 1) if x.data.max() < 0.9 else x.data[:, :, 0] * 0.5)
        assert vq_loss(li, pair(x, y)) > 0

    def test_gan_half(self):
        assert abs(gan_loss(0.5, 0.5) - 2 * math.log(0.5)) <= 1e-12
        assert gan_loss(0.5, 0.5) == pytest.approx(-1.3863, abs=1e-4)

    def test_gan_limit(self):
        v = gan_loss(1 - 1e-9, 1e-9)
        assert -1e-8 < v < 0

    def test_gan_inverse_e(self):
        assert abs(gan_loss(math.exp(-1), 1 - math.exp(-1)) - (-2.0)) <= 1e-12

    @pytest.mark.parametrize("d", [0.0, 1.0, -0.1, 1.5])
    def test_gan_domain(self, d):
        with pytest.raises(ValueError):
            gan_loss(d, 0.5)
        with pytest.raises(ValueError):
            gan_loss(0.5, d)

    def test_lambda(self):
        assert abs(adaptive_lambda(2.0, 1.0) - 2.0 / (1.0 + 1e-6)) <= 1e-12
        assert adaptive_lambda(2.0, 1.0) == pytest.approx(1.999998, abs=1e-6)
        assert adaptive_lambda(0.0, 123.0) == 0.0
        assert adaptive_lambda(1.0, 0.0) == 1e6
        assert DELTA == 1e-6

    def test_lambda_negative(self):
        with pytest.raises(ValueError):
            adaptive_lambda(-1.0, 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-3, 10))
    def test_lambda_monotone(self, r, g, step):
        assert adaptive_lambda(r + step, g) >= adaptive_lambda(r, g)
        assert adaptive_lambda(r, g + step) <= adaptive_lambda(r, g)

    def test_total(self):
        x = gray([[0.3]])
        li = LossInputs([0.0], [1.0], 0.5, 0.5, 2.0, 1.0)
        out = total_loss(li, pair(x, x))
        assert out["total"] == out["vq_loss"] + out["lambda"] * out["gan_loss"]


def _write_pngs(tmp_path, shapes):
    paths = []
    for i, shape in enumerate(shapes):
        p = tmp_path / f"img{i}.png"
        save_png(p, gray(np.full(shape, 0.5)))
        paths.append(p.name)
    return paths


class TestIngest:
    def test_two_rows(self, tmp_path):
        a, b = _write_pngs(tmp_path, [(4, 4), (4, 4)])
        write_manifest(tmp_path / "m.csv", [
            {"original": a, "reconstruction": b, "label": 0},
            {"original": b, "reconstruction": a, "label": 1, "quantization_loss": 0.07},
        ])
        pairs = ingest_pairs(tmp_path / "m.csv")
        assert len(pairs) == 2
        assert [p.label for p in pairs] == [0, 1]
        assert pairs[0].sidecar == SidecarLosses()
        assert pairs[1].sidecar.quantization_loss == 0.07
        assert pairs[0].image_id == "img0"

    def test_dim_mismatch_names_row(self, tmp_path):
        a, b = _write_pngs(tmp_path, [(4, 4), (4, 5)])
        write_manifest(tmp_path / "m.csv", [
            {"original": a, "reconstruction": a, "label": 0},
            {"original": a, "reconstruction": b, "label": 0},
        ])
        with pytest.raises(ManifestError, match="row 3"):
            ingest_pairs(tmp_path / "m.csv")

    def test_bad_label(self, tmp_path):
        (a,) = _write_pngs(tmp_path, [(2, 2)])
        write_manifest(tmp_path / "m.csv", [{"original": a, "reconstruction": a, "label": 2}])
        with pytest.raises(ManifestError, match="label"):
            ingest_pairs(tmp_path / "m.csv")

    def test_missing_file(self, tmp_path):
        (a,) = _write_pngs(tmp_path, [(2, 2)])
        write_manifest(tmp_path / "m.csv", [{"original": a, "reconstruction": "gone.png", "label": 0}])
        with pytest.raises(ManifestError, match="missing file"):
            ingest_pairs(tmp_path / "m.csv")

    def test_native_reconstruction(self, tmp_path):
        (a,) = _write_pngs(tmp_path, [(3, 3)])
        save_tensor(tmp_path / "r.zfnt", gray(np.full((3, 3), 0.25)))
        write_manifest(tmp_path / "m.csv", [{"original": a, "reconstruction": "r.zfnt", "label": 1}])
        (p,) = ingest_pairs(tmp_path / "m.csv")
        assert p.reconstruction.data[0, 0, 0] == np.float32(0.25)

    def test_pair_validation(self):
        with pytest.raises(ValueError):
            ReconPair(gray([[0.0]]), gray([[0.0, 0.0]]))
        with pytest.raises(ValueError):
            SidecarLosses(quantization_loss=-1.0)
