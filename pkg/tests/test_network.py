import numpy as np
import pytest

from gupdm import datasets, physics
from gupdm import tensor as T
from gupdm.exceptions import ConfigError, DimensionError
from gupdm.network import (
    GupdmModel,
    ModelConfig,
    Variant,
    conditioning_inputs,
    enhance_image,
    to_nchw,
)
from gupdm.tensor import Tensor, no_grad

TINY = dict(channels=4, code_dim=6, n_kernels=2, hyper_blocks=1, hyper_channels=4)


@pytest.fixture(scope="module")
def images():
    degraded, clean, _, _ = datasets.make_pairs(2, 32, seed=11)
    return degraded, clean


def test_parameter_sets_are_disjoint():
    m = GupdmModel(ModelConfig(**TINY))
    ids = {name: {id(p) for p in m.parameter_set(name)} for name in ("theta", "phi", "omega")}
    assert not (ids["theta"] & ids["phi"]) and not (ids["theta"] & ids["omega"]) and not (ids["phi"] & ids["omega"])
    names = [n for n, _ in m.named_parameters()]
    assert len(names) == len(set(names))


@pytest.mark.parametrize("size", [32, 64])
def test_output_shape_and_range(size):
    m = GupdmModel(ModelConfig(**TINY))
    degraded, _, _, _ = datasets.make_pairs(2, size, seed=size)
    with no_grad():
        out = m.full_forward(degraded).data
    assert out.shape == (2, 3, size, size)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_output_shape_256_default_config():
    m = GupdmModel()
    img = np.random.default_rng(0).random((256, 256, 3))
    with no_grad():
        assert m.full_forward(img).shape == (1, 3, 256, 256)


def test_gradient_reaches_every_parameter(images):
    degraded, clean = images
    m = GupdmModel()
    out = m.full_forward(degraded)
    T.mean(T.abs_(out - Tensor(to_nchw(clean)))).backward()
    dead = [n for n, p in m.named_parameters() if p.grad is None or not np.any(p.grad != 0)]
    assert dead == []
    zero_entries = sum(int(np.sum(p.grad == 0)) for _, p in m.named_parameters())
    assert zero_entries == 0


def test_forward_is_deterministic(images):
    degraded, _ = images
    a = GupdmModel(ModelConfig(**TINY, seed=3))
    b = GupdmModel(ModelConfig(**TINY, seed=3))
    with no_grad():
        assert a.full_forward(degraded).data.tobytes() == b.full_forward(degraded).data.tobytes()


def test_degenerate_variants_match_base(images):
    degraded, _ = images
    m = GupdmModel(ModelConfig(**TINY))
    ones = np.ones((2, 3))
    lam = np.random.default_rng(1).uniform(0.3, 0.6, (2, 3))
    with no_grad():
        base = m.full_forward(degraded, "base").data
        atm1 = m.full_forward(degraded, Variant("atm", lambdas=ones)).data
        atm = m.full_forward(degraded, Variant("atm", lambdas=lam)).data
        both = m.full_forward(degraded, Variant("atm_trans", lambdas=lam, gammas=ones)).data
    np.testing.assert_array_equal(base, atm1)
    np.testing.assert_array_equal(atm, both)


def test_three_variants_are_distinct(images):
    degraded, _ = images
    m = GupdmModel()
    rng = np.random.default_rng(2)
    with no_grad():
        outs = [m.full_forward(degraded, k, rng).data for k in ("base", "atm", "atm_trans")]
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(outs[i] - outs[j]) > 0


def test_ads_zero_image_zero_biases_gives_zero_code():
    m = GupdmModel(ModelConfig(**TINY))
    for name, p in m.ads.named_parameters():
        if name.endswith("bias") or name.endswith("_b1") or name.endswith("_b2"):
            p.data = np.zeros_like(p.data)
    with no_grad():
        code = m.ads_forward(Tensor(np.zeros((1, 3, 16, 16)))).data
    np.testing.assert_array_equal(code, 0.0)


def test_ads_code_separates_atmosphere_levels(images):
    degraded, _ = images
    m = GupdmModel()
    p = [physics.estimate_priors(degraded[0])]
    with no_grad():
        lo = m.ads_forward(Tensor(conditioning_inputs(p, Variant("atm", lambdas=np.full(3, 0.3))).ads_input)).data
        hi = m.ads_forward(Tensor(conditioning_inputs(p, Variant("atm", lambdas=np.full(3, 0.6))).ads_input)).data
        g_lo = m.tds_forward(Tensor(conditioning_inputs(p, Variant("atm_trans", lambdas=np.ones(3), gammas=np.full(3, 0.5))).tds_input))
        g_hi = m.tds_forward(Tensor(conditioning_inputs(p, Variant("atm_trans", lambdas=np.ones(3), gammas=np.full(3, 1.0))).tds_input))
    assert np.linalg.norm(lo - hi) > 0
    assert np.linalg.norm(g_lo[0].data - g_hi[0].data) > 0
    assert g_lo[1].shape == (1, 1, 16, 16)


def test_conditioning_changes_generated_weights():
    m = GupdmModel(ModelConfig(**TINY))
    cond = Tensor(np.random.default_rng(0).standard_normal((1, 6)))
    bumped = Tensor(cond.data + 1e-4)
    with no_grad():
        for hrb in m.pms.hrbs():
            assert not np.array_equal(hrb.generate(cond)["w1"].data, hrb.generate(bumped)["w1"].data)


def test_zero_output_conv_reproduces_input(images):
    degraded, _ = images
    m = GupdmModel(ModelConfig(**TINY))
    m.pms.out.weight.data[:] = 0.0
    m.pms.out.bias.data[:] = 0.0
    with no_grad():
        out = m.full_forward(degraded).data
    np.testing.assert_array_equal(out, to_nchw(degraded))


def test_ablation_switches_build():
    for cfg in (
        ModelConfig(**TINY, use_ads=False),
        ModelConfig(**TINY, use_tds=False),
        ModelConfig(**TINY, use_tgfe=False),
        ModelConfig(**TINY, wide_modules=("3h", "3h")),
        ModelConfig(**TINY, narrow_modules=("hmh", "hmh")),
    ):
        m = GupdmModel(cfg)
        with no_grad():
            assert m.full_forward(np.random.default_rng(0).random((16, 16, 3))).shape == (1, 3, 16, 16)
    with pytest.raises(ConfigError):
        ModelConfig(wide_modules=("x", "hmh"))


def test_conditioning_length_checked():
    m = GupdmModel(ModelConfig(**TINY))
    x = Tensor(np.zeros((1, 3, 16, 16)))
    with pytest.raises(DimensionError):
        m.pms(x, Tensor(np.zeros((1, 5))), Tensor(np.zeros((1, 6))), None)
    with pytest.raises(DimensionError):
        m.pms(Tensor(np.zeros((1, 3, 15, 16))), Tensor(np.zeros((1, 6))), Tensor(np.zeros((1, 6))), None)


def test_enhance_image_any_size():
    m = GupdmModel(ModelConfig(**TINY))
    for shape in ((7, 9, 3), (16, 16, 3), (11, 20, 3)):
        img = np.random.default_rng(0).random(shape)
        out = enhance_image(m, img)
        assert out.shape == shape
        assert out.min() >= 0 and out.max() <= 1


def test_config_round_trip_and_state_dict():
    cfg = ModelConfig(**TINY, seed=9)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    a, b = GupdmModel(cfg), GupdmModel(ModelConfig(**TINY, seed=10))
    b.load_state_dict(a.state_dict())
    for (n1, p1), (n2, p2) in zip(a.named_parameters(), b.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)
