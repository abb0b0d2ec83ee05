import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softids import fr1
from softids.kdd import AttackClass

from conftest import make_dataset


def triangle(x, h, n=20):
    """Independent scalar form of the h-th (1-based) histogram set."""
    peak = (h - 1) / (n - 1)
    width = 1 / (n - 1)
    return max(0.0, 1 - abs(x - peak) / width)


def test_boundaries():
    b = fr1.interval_boundaries()
    assert len(b) == 21
    assert b[0] == 0.0 and b[20] == 1.0
    assert b[10] == pytest.approx(0.5, abs=1e-15)
    assert b[1] == pytest.approx(1 / 38, abs=1e-15)
    assert np.all(np.diff(b) > 0)


def test_histogram_memberships_match_scalar_triangles():
    xs = np.random.default_rng(0).random(200)
    got = fr1.histogram_memberships(xs)
    want = np.array([[triangle(x, h) for h in range(1, 21)] for x in xs])
    assert np.allclose(got, want, atol=1e-12)


def test_half_level_sets_meet_at_boundaries():
    b = fr1.interval_boundaries()
    for h in range(1, 20):
        assert triangle(b[h], h) == pytest.approx(0.5)
        assert triangle(b[h], h + 1) == pytest.approx(0.5)


def test_histogram_mass_at_zero():
    data = make_dataset(np.zeros(10), [1] * 10)
    mf = fr1.smoothed_histogram(data, 0, 1)
    assert mf.bins[0] == 1.0
    assert np.all(mf.bins[1:] < 1.0)
    assert mf(0.0) == 1.0


def test_histogram_single_point_midway():
    m = fr1.histogram_memberships(0.5)
    assert m.sum() == pytest.approx(1.0)
    assert m[9] == pytest.approx(0.5) and m[10] == pytest.approx(0.5)
    assert np.count_nonzero(m) == 2


def test_histogram_uniform_data():
    x = np.random.default_rng(1).random(100_000)
    data = make_dataset(x, [3] * len(x))
    bins = fr1.smoothed_histogram(data, 0, 3).bins
    # oracle: expected mass of each triangle under U(0,1) is 1/19 inside, 1/38 at the ends
    expected = np.r_[0.5, np.ones(18), 0.5]
    assert np.all(bins <= 1.0) and bins.max() == 1.0
    assert np.all((bins[1:-1] >= 0.9) & (bins[1:-1] <= 1.0))
    assert np.allclose(bins, expected, atol=0.05)


def test_histogram_empty_class():
    data = make_dataset([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError, match="no patterns"):
        fr1.smoothed_histogram(data, 0, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_histogram_bins_normalized(values):
    data = make_dataset(values, [2] * len(values))
    mf = fr1.smoothed_histogram(data, 0, AttackClass.PROBE)
    assert np.all((mf.bins >= 0) & (mf.bins <= 1))
    assert mf.bins.max() == pytest.approx(1.0)


# --- Gaussian rules ------------------------------------------------------------

def test_gaussian_values():
    assert fr1.gaussian_membership(0.3, 0.3, 0.1) == 1.0
    assert fr1.gaussian_membership(0.4, 0.3, 0.1) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert fr1.gaussian_membership(0.6, 0.3, 0.1) == pytest.approx(math.exp(-4.5), abs=1e-12)
    assert math.exp(-0.5) == pytest.approx(0.60653, abs=1e-5)
    assert math.exp(-4.5) == pytest.approx(0.011109, abs=1e-6)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_gaussian_rejects_bad_sigma(sigma):
    with pytest.raises(ValueError):
        fr1.gaussian_membership(0.1, 0.0, sigma)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-3, 5))
def test_gaussian_in_unit_interval(x, mu, sigma):
    v = fr1.gaussian_membership(x, mu, sigma)
    assert 0 <= v <= 1
    assert (v == 1.0) == (abs(x - mu) / sigma < 1e-8) or abs(x - mu) / sigma < 1e-7


def test_train_mean_and_population_std():
    X = np.array([[0.2], [0.4], [0.9]])
    model = fr1.train_fr1(make_dataset(X, [1, 1, 2]), classes=(1, 2))
    assert model.means[0, 0] == pytest.approx(0.3)
    assert model.stds[0, 0] == pytest.approx(0.1)
    assert model.stds[1, 0] == fr1.SIGMA_FLOOR


def test_train_lists_absent_classes():
    with pytest.raises(ValueError, match=r"\[4, 5\]"):
        fr1.train_fr1(make_dataset([0.1, 0.2, 0.3], [1, 2, 3]))


def test_identical_classes_tie_to_lowest():
    X = np.array([[0.1], [0.3], [0.1], [0.3]])
    model = fr1.train_fr1(make_dataset(X, [1, 1, 2, 2]), classes=(1, 2))
    assert np.array_equal(model.means[0], model.means[1])
    cls, _ = fr1.classify_fr1(model, np.array([0.2]))
    assert cls == AttackClass.NORMAL


def test_classify_at_class_means():
    means = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
    stds = np.full((3, 2), 0.05)
    model = fr1.FR1Model((1, 2, 3), ("A", "B"), means, stds)
    cls, score = fr1.classify_fr1(model, np.array([0.5, 0.5]))
    assert cls == AttackClass.PROBE and score == pytest.approx(1.0)


def test_classify_matches_brute_force_product():
    rng = np.random.default_rng(3)
    means = rng.random((2, 2))
    stds = rng.uniform(0.05, 0.3, (2, 2))
    model = fr1.FR1Model((1, 2), ("A", "B"), means, stds)
    for x in rng.random((500, 2)):
        scores = [math.prod(math.exp(-0.5 * ((x[i] - means[k, i]) / stds[k, i]) ** 2) for i in range(2))
                  for k in range(2)]
        want = 1 + int(scores[1] > scores[0])
        cls, score = fr1.classify_fr1(model, x)
        assert int(cls) == want
        assert score == pytest.approx(max(scores), rel=1e-12)


def test_dimension_mismatch():
    model = fr1.FR1Model((1,), ("A",), np.zeros((1, 1)), np.ones((1, 1)))
    with pytest.raises(ValueError, match="expected 1"):
        model.predict(np.zeros((3, 2)))


def test_log_domain_avoids_underflow():
    # each factor is about 1e-136, so the plain 41-factor products underflow to 0
    means = np.vstack([np.zeros(41), np.full(41, 0.01)])
    model = fr1.FR1Model((1, 2), tuple(f"a{i}" for i in range(41)), means, np.full((2, 41), 0.04))
    x = np.full((1, 41), 1.0)
    assert np.prod(fr1.gaussian_membership(x[0], means[0], 0.04)) == 0.0
    assert model.predict(x)[0] == 2
    direct = (-0.5 * ((x - means) / 0.04) ** 2).sum(axis=1)
    assert np.allclose(model.log_scores(x)[0], direct, rtol=0, atol=1e-9)
    conf = model.confidences(x)
    assert conf[0, 1] == 1.0 and 0 <= conf[0, 0] <= 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.permutations(range(4)))
def test_winner_invariant_under_attribute_permutation(seed, perm):
    rng = np.random.default_rng(seed)
    means, stds = rng.random((3, 4)), rng.uniform(0.05, 0.5, (3, 4))
    X = rng.random((20, 4))
    a = fr1.FR1Model((1, 2, 3), tuple("ABCD"), means, stds)
    perm = list(perm)
    b = fr1.FR1Model((1, 2, 3), tuple("ABCD"), means[:, perm], stds[:, perm])
    assert np.array_equal(a.predict(X), b.predict(X[:, perm]))
    # relabelling classes by a strictly increasing map keeps the argmax position
    c = fr1.FR1Model((2, 4, 5), tuple("ABCD"), means, stds)
    relabel = {1: 2, 2: 4, 3: 5}
    assert [relabel[k] for k in a.predict(X)] == c.predict(X).tolist()


def test_model_round_trip():
    rng = np.random.default_rng(2)
    data = make_dataset(rng.random((50, 3)), np.repeat([1, 2, 3, 4, 5], 10))
    m = fr1.train_fr1(data)
    back = fr1.FR1Model.from_dict(m.to_dict())
    assert np.array_equal(back.predict(data.X), m.predict(data.X))
    with pytest.raises(ValueError):
        fr1.FR1Model.from_dict({"format": "softids/fr2", "version": 1})
