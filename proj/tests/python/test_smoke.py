import numpy as np
import pytest

import pcenet


@pytest.fixture(scope="module")
def fundus():
    pixels, mask = pcenet.synthetic_fundus(64, seed=2)
    return pixels, mask


def test_synthetic_fundus_shape_and_range(fundus):
    pixels, mask = fundus
    assert pixels.shape == (64, 64, 3)
    assert pixels.min() >= 0.0 and pixels.max() <= 1.0
    assert mask.shape == (64, 64) and mask.dtype == bool


def test_save_and_load_round_trip(tmp_path, fundus):
    pixels, _ = fundus
    path = tmp_path / "x.png"
    pcenet.save_image(pixels, path)
    loaded, _ = pcenet.load_image(path, side=64)
    assert loaded.shape == pixels.shape
    assert np.abs(loaded - pixels).max() <= 0.5 / 255 + 1e-12


def test_load_missing_file_raises_io_error(tmp_path):
    with pytest.raises(pcenet.IoError):
        pcenet.load_image(tmp_path / "missing.png")


def test_pyramid_round_trip(fundus):
    pixels, _ = fundus
    levels = pcenet.laplacian_decompose(pixels, 3)
    assert [lv.shape[0] for lv in levels] == [64, 32, 16, 8]
    np.testing.assert_allclose(pcenet.laplacian_reconstruct(levels), pixels, atol=1e-10)


def test_degrade_is_seeded(fundus):
    pixels, mask = fundus
    a, recipes = pcenet.degrade(pixels, seq_len=3, seed=5, image_id="img", fov_mask=mask)
    b, _ = pcenet.degrade(pixels, seq_len=3, seed=5, image_id="img", fov_mask=mask)
    assert len(a) == 3 and len(recipes) == 3
    assert isinstance(recipes[0], dict)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    with pytest.raises(pcenet.PcenetError):
        pcenet.degrade(pixels, seq_len=0)


def test_model_forward_shapes(fundus):
    pixels, _ = fundus
    model = pcenet.Model(depth=3, base_channels=4, channel_cap=16, seed=1)
    out, taps = model.forward(pixels)
    assert out.shape == pixels.shape
    assert 0.0 <= out.min() and out.max() <= 1.0
    assert len(taps) == 3
    assert model.parameter_count == pcenet.parameter_count(3, 4, 16)
    assert pcenet.parameter_count() == 19_621_123


def test_spp_length():
    feature = np.random.default_rng(0).random((5, 16, 16))
    assert len(pcenet.spp(feature)) == 84 * 5


def test_objectives():
    target = np.full((8, 8, 3), 0.5)
    assert pcenet.enhancement_loss(target, [target + 0.05]) == pytest.approx(0.05)
    assert pcenet.layer_consistency_loss([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(1 - 1 / np.sqrt(2))
    assert pcenet.total_loss(0.05, 0.3, 0.1) == pytest.approx(0.08)


def test_lr_schedule():
    assert pcenet.lr_schedule(0) == pytest.approx(1e-3)
    assert pcenet.lr_schedule(200) == 0.0
    with pytest.raises(pcenet.ParameterError):
        pcenet.lr_schedule(201)


def test_metrics():
    rng = np.random.default_rng(1)
    a = rng.random((32, 32, 3)) * 0.5
    assert pcenet.psnr(a, a + 0.1) == pytest.approx(20.0)
    assert pcenet.ssim(a, a) == pytest.approx(1.0)
    pred = np.zeros((20, 20), np.uint8)
    ref = np.zeros((20, 20), np.uint8)
    pred.flat[:100] = 1
    ref.flat[50:150] = 1
    assert pcenet.overlap_metrics(pred, ref) == pytest.approx((1 / 3, 0.5))
    assert pcenet.wfqa([("a", "Good"), ("b", "Usable"), ("c", "Reject")]) == pytest.approx((1 / 3, 1.0))
