import numpy as np
import pytest

from gupdm import losses
from gupdm.exceptions import ConfigError, DimensionError
from gupdm.gradcheck import check_gradients
from gupdm.tensor import Tensor

from test_tensor import brute_conv


def rand_pair(seed, shape=(1, 3, 16, 16)):
    rng = np.random.default_rng(seed)
    return rng.random(shape), rng.random(shape)


def test_l1_examples():
    a, _ = rand_pair(0)
    assert losses.l1_loss(a, a).item() == 0.0
    assert losses.l1_loss(np.zeros((1, 3, 4, 4)), np.ones((1, 3, 4, 4))).item() == 1.0
    J = np.array([[[[0.2], [0.4]]]])
    gt = np.array([[[[0.0], [1.0]]]])
    assert losses.l1_loss(J, gt).item() == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(DimensionError):
        losses.l1_loss(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


def test_smooth_l1_variant():
    d = np.array([[[[0.05, 0.5]]]])
    got = losses.l1_loss(d, np.zeros_like(d), huber_delta=0.1).item()
    assert got == pytest.approx((0.5 * 0.05**2 / 0.1 + (0.5 - 0.05)) / 2)


def test_ssim_loss_examples():
    a, b = rand_pair(1)
    assert losses.ssim_loss(a, a).item() == pytest.approx(0.0, abs=1e-15)
    v = losses.ssim_loss(a, b).item()
    assert 0.0 <= v <= 2.0
    assert v == pytest.approx(losses.ssim_loss(b, a).item(), abs=1e-14)
    c1, c2 = 0.01**2, 0.03**2
    x, y = 0.3, 0.7
    expected = (2 * x * y + c1) * c2 / ((x * x + y * y + c1) * c2)
    got = losses.ssim_index(np.full((1, 3, 12, 12), x), np.full((1, 3, 12, 12), y)).item()
    assert got == pytest.approx(expected, abs=1e-12)


def test_ssim_loss_matches_metric_ssim():
    from gupdm import metrics

    a, b = rand_pair(2, (2, 3, 20, 20))
    metric = np.mean([metrics.ssim(a[i].transpose(1, 2, 0), b[i].transpose(1, 2, 0)) for i in range(2)])
    assert losses.ssim_index(a, b).item() == pytest.approx(metric, abs=1e-12)


def test_perceptual_identity_extractor_is_pixel_mse():
    a, b = rand_pair(3)
    ident = losses.IdentityExtractor()

    def down(x):
        return 0.25 * (x[..., ::2, ::2] + x[..., 1::2, ::2] + x[..., ::2, 1::2] + x[..., 1::2, 1::2])

    expected = np.mean([np.mean((a - b) ** 2), np.mean((down(a) - down(b)) ** 2), np.mean((down(down(a)) - down(down(b))) ** 2)])
    assert losses.perceptual_loss(a, b, ident).item() == pytest.approx(expected, rel=1e-12)
    assert losses.perceptual_loss(a, a, ident).item() == 0.0


def test_perceptual_random_extractor_matches_straight_line_oracle():
    a, b = rand_pair(4)
    ext = losses.RandomConvExtractor(seed=0)

    def features(x):
        taps = []
        for i, stride in enumerate((1, 2, 2)):
            w = ext._params[f"stage{i}.weight"].data
            bias = ext._params[f"stage{i}.bias"].data
            x = np.maximum(brute_conv(x, w, bias, stride, 1), 0.0)
            taps.append(x)
        return taps

    expected = np.mean([np.mean((fa - fb) ** 2) for fa, fb in zip(features(a), features(b))])
    assert losses.perceptual_loss(a, b, ext).item() == pytest.approx(expected, rel=1e-10)
    assert [t.shape[1] for t in ext(Tensor(a))] == [8, 16, 32]
    assert all(not p.requires_grad for p in ext.parameters())


def test_perceptual_requires_three_taps():
    class TwoTaps:
        def __call__(self, x):
            return [x, x]

    a, b = rand_pair(5)
    with pytest.raises(ConfigError):
        losses.perceptual_loss(a, b, TwoTaps())


def test_total_loss_composition():
    a, b = rand_pair(6)
    total, parts = losses.total_loss(a, b)
    ext = losses.default_extractor()
    hand = (
        losses.l1_loss(a, b).item()
        + 0.04 * losses.ssim_loss(a, b).item()
        + 0.02 * losses.perceptual_loss(a, b, ext).item()
    )
    assert total.item() == pytest.approx(hand, rel=1e-13)
    assert parts["total"] == total.item()
    only_l1, _ = losses.total_loss(a, b, losses.LossWeights(0.0, 0.0))
    assert only_l1.item() == losses.l1_loss(a, b).item()
    zero, _ = losses.total_loss(a, a)
    assert zero.item() == pytest.approx(0.0, abs=1e-15)


def test_total_loss_gradient_8x8():
    a, b = rand_pair(7, (1, 3, 8, 8))
    check_gradients(lambda J: losses.total_loss(J, Tensor(b))[0], [a])


def test_loss_weights_validated():
    with pytest.raises(ConfigError):
        losses.LossWeights(-0.1, 0.02)
    with pytest.raises(ConfigError):
        losses.LossWeights(huber_delta=0.0)
