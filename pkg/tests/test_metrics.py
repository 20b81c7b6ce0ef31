import math

import numpy as np
import pytest
from scipy import ndimage

from gupdm import datasets, metrics


@pytest.fixture(scope="module")
def corpus():
    return datasets.fixture_corpus()


def test_mse_examples():
    a = np.random.default_rng(0).random((4, 4, 3))
    assert metrics.mse(a, a) == 0.0
    assert metrics.mse(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == 65025.0
    # two pixels, one channel differs by 10/255 and 20/255
    x = np.zeros((1, 2, 1))
    y = np.array([[[10.0], [20.0]]]) / 255.0
    assert metrics.mse(x, y) == pytest.approx((100 + 400) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        metrics.mse(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_psnr_examples():
    a = np.random.default_rng(1).random((4, 4, 3))
    assert metrics.psnr(a, a) == metrics.PSNR_CAP == 99.0
    assert metrics.psnr(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == 0.0
    assert 10 * math.log10(65025 / 651) == pytest.approx(20.0, abs=0.01)


def test_psnr_mse_consistency():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
        assert metrics.psnr(a, b) == pytest.approx(10 * math.log10(255.0**2 / metrics.mse(a, b)), abs=1e-9)


def test_ssim_identity_symmetry_constants():
    rng = np.random.default_rng(3)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    assert metrics.ssim(a, a) == 1.0
    assert metrics.ssim(a, b) == pytest.approx(metrics.ssim(b, a), abs=1e-15)
    assert -1.0 <= metrics.ssim(a, b) <= 1.0
    x, y = 0.2 * 255, 0.6 * 255
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    expected = (2 * x * y + c1) * c2 / ((x * x + y * y + c1) * c2)
    assert metrics.ssim(np.full((12, 12, 3), 0.2), np.full((12, 12, 3), 0.6)) == pytest.approx(expected, abs=1e-12)


def test_ssim_window_shrinks_for_small_images():
    assert metrics.ssim_window_size(64, 64) == 11
    assert metrics.ssim_window_size(8, 9) == 7
    a = np.random.default_rng(4).random((5, 5, 3))
    assert metrics.ssim(a, a) == 1.0


def test_gaussian_window_normalised():
    w = metrics.gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[5, 5] == w.max()


def test_uciqe_gray_is_contrast_only():
    img = np.zeros((10, 10, 3))
    img[:5] = 0.8
    img[5:] = 0.2
    from skimage import color

    lum = color.rgb2lab(img)[:, :, 0]
    expected = 0.2745 * (lum.max() - lum.min())
    assert metrics.uciqe(img) == pytest.approx(expected, abs=1e-6)
    assert metrics.uciqe(np.full((8, 8, 3), 0.5)) == pytest.approx(0.0, abs=1e-6)


def test_uiqm_components_on_constant_image():
    img = np.full((16, 16, 3), 0.4)
    assert metrics.uicm(img) == pytest.approx(0.0, abs=1e-12)
    assert metrics.uiconm(img) == 0.0


def test_blur_and_desaturation_lower_scores(corpus):
    for i in range(4):
        sharp = corpus[f"clean{i}"]
        blurred = ndimage.gaussian_filter(sharp, sigma=(1.5, 1.5, 0))
        gray = sharp.mean(axis=2, keepdims=True)
        washed = 0.3 * sharp + 0.7 * gray
        assert metrics.uism(blurred) < metrics.uism(sharp)
        assert metrics.uiqm(blurred) < metrics.uiqm(sharp)
        assert metrics.uciqe(washed) < metrics.uciqe(sharp)


def test_no_reference_metrics_finite_on_corpus(corpus):
    for name, img in corpus.items():
        assert math.isfinite(metrics.uiqm(img)), name
        assert math.isfinite(metrics.uciqe(img)), name


def test_evaluate_dispatch():
    a = np.random.default_rng(5).random((12, 12, 3))
    out = metrics.evaluate(a, a)
    assert out["mse"] == 0.0 and out["ssim"] == 1.0 and out["psnr"] == 99.0
    assert set(metrics.evaluate(a, None)) == {"uciqe", "uiqm"}
    with pytest.raises(ValueError):
        metrics.evaluate(a, a, ["psnr", "niqe"])
