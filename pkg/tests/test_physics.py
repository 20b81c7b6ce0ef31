import numpy as np
import pytest
from scipy.stats import spearmanr

from gupdm import datasets, physics
from gupdm.exceptions import DimensionError, DomainError, EstimationError


def test_synthesize_hand_value():
    J = np.full((1, 1, 3), 0.5)
    T = np.full((1, 1, 3), 0.5)
    out = physics.synthesize(J, [0.8, 0.8, 0.8], T)
    np.testing.assert_allclose(out, 0.65, rtol=0, atol=1e-15)


def test_synthesize_unit_transmission_is_identity():
    J = np.random.default_rng(0).random((4, 4, 3))
    np.testing.assert_array_equal(physics.synthesize(J, [0.2, 0.5, 0.9], np.ones((4, 4))), J)


def test_invert_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(20):
        J = rng.uniform(0.05, 0.95, (5, 5, 3))
        A = rng.uniform(0.05, 0.95, 3)
        T = rng.uniform(0.05, 1.0, (5, 5, 3))
        np.testing.assert_allclose(physics.invert(physics.synthesize(J, A, T), A, T), J, atol=1e-10)


def test_invalid_transmission_and_shapes():
    J = np.zeros((2, 2, 3))
    with pytest.raises(DomainError):
        physics.synthesize(J, [0.5] * 3, np.zeros((2, 2, 3)))
    with pytest.raises(DimensionError):
        physics.synthesize(J, [0.5, 0.5], np.ones((2, 2, 3)))
    with pytest.raises(DimensionError):
        physics.synthesize(np.zeros((2, 2)), [0.5] * 3, np.ones((2, 2)))
    with pytest.raises(DomainError):
        physics.invert(J, [0.5] * 3, np.ones((2, 2, 3)), t_floor=0.0)


def test_generator_ranges_open():
    rng = np.random.default_rng(0)
    A = np.array([0.2, 0.6, 0.8])
    for A_m, lam in physics.vary_atmosphere(A, 500, rng):
        assert np.all((lam > 0.3) & (lam < 0.6))
        np.testing.assert_allclose(A_m, lam * A)
    T = np.full((2, 2, 3), 0.95)
    for T_n, g in physics.vary_transmission(T, 500, rng):
        assert np.all((g > 0.5) & (g < 1.1))
        assert np.all(T_n <= 1.0) and np.all(T_n > 0)


class _StubRng:
    """Returns the lower bound it is given; checks the interval is open."""

    def uniform(self, low, high, size):
        return np.full(size, low)


def test_generator_lower_bound_excluded_with_stub():
    (_, lam), = physics.vary_atmosphere([0.5, 0.5, 0.5], 1, _StubRng())
    assert np.all(lam > 0.3)


def test_generator_counts_must_be_positive():
    with pytest.raises(DomainError):
        physics.vary_atmosphere([0.5] * 3, 0, np.random.default_rng())
    with pytest.raises(DomainError):
        physics.vary_transmission(np.ones((2, 2, 3)), 0, np.random.default_rng())


def test_udcp_tracks_true_transmission():
    degraded, _, _, trans = datasets.make_pairs(20, 64, seed=0, per_channel=False)
    for d, t in zip(degraded, trans):
        est = physics.estimate_priors(d).transmission[:, :, 0]
        assert spearmanr(est.ravel(), t[:, :, 0].ravel())[0] >= 0.9


def test_udcp_ignores_red():
    rng = np.random.default_rng(4)
    img = rng.random((16, 16, 3))
    A = np.array([0.3, 0.7, 0.8])
    base = physics.estimate_transmission_udcp(img, A, 7)
    img2 = img.copy()
    img2[:, :, 0] = rng.random((16, 16))
    assert np.array_equal(base, physics.estimate_transmission_udcp(img2, A, 7))


def test_udcp_errors():
    img = np.ones((8, 8, 3)) * 0.5
    with pytest.raises(EstimationError):
        physics.estimate_transmission_udcp(img, [0.5, 0.0, 0.5])
    with pytest.raises(DomainError):
        physics.estimate_transmission_udcp(img, [0.5] * 3, patch=4)


def test_udcp_haze_free_is_near_one():
    img = np.zeros((9, 9, 3))
    img[:, :, 0] = 0.9
    t = physics.estimate_transmission_udcp(img, [0.5, 0.5, 0.5], 3)
    np.testing.assert_array_equal(t, 1.0)


def test_estimate_atmosphere_picks_brightest_haze():
    img = np.full((20, 20, 3), 0.1)
    img[0, 0] = [0.2, 0.9, 0.95]
    A = physics.estimate_atmosphere(img, fraction=0.0025, patch=1)
    np.testing.assert_allclose(A, [0.2, 0.9, 0.95])


def test_default_patch():
    assert physics.default_patch(32, 32) == 7
    assert physics.default_patch(256, 256) == 15


def test_priors_render_reproduces_estimate():
    degraded, _, _, _ = datasets.make_pairs(1, 32, seed=5)
    p = physics.estimate_priors(degraded[0])
    assert p.radiance.shape == degraded[0].shape
    assert np.all((p.radiance >= 0) & (p.radiance <= 1))
    assert np.all(p.transmission >= physics.T_FLOOR)


def test_degradation_sample_grid_and_replay():
    degraded, _, _, _ = datasets.make_pairs(1, 16, seed=3)
    s = physics.make_degradation_sample(degraded[0], 3, 2, np.random.default_rng(9))
    assert len(s.atmosphere_images) == 3
    assert all(len(row) == 2 for row in s.transmission_images)
    r = physics.replay_degradation_sample(degraded[0], s.lambdas, s.gammas)
    for a, b in zip(s.atmosphere_images, r.atmosphere_images):
        assert np.array_equal(a, b)
    for ra, rb in zip(s.transmission_images, r.transmission_images):
        for a, b in zip(ra, rb):
            assert np.array_equal(a, b)
