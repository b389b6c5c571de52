"""Test functions in statistics."""
import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from selective_prediction.core import InvalidObservationError
from selective_prediction.statistics import (
    check_concat_concave, check_smooth, emd, emd_sorted,
    emd_to_reference_family, learnability_family, max_of_means_family,
    mean_family, ModelClass, plugin_family, random_model_class,
    threshold_family, transport_emd)


@pytest.mark.parametrize(
    "x,y,expected",
    [
        ([0.0], [1.0], 1.0),
        ([0.0, 1.0], [0.5], 0.5),
        ([0.0, 0.0, 1.0], [0.0, 1.0], 1 / 6),
        ([0.2, 0.4], [0.4, 0.2], 0.0),
        ([0.25, 0.75], [0.5, 0.5], 0.25),
    ],
)
def test_emd(x, y, expected):
    """Test earth mover's distance on small multisets."""
    assert emd(x, y) == pytest.approx(expected, abs=1e-12)
    assert transport_emd(x, y) == pytest.approx(expected, abs=1e-9)


def test_emd_matches_references():
    """Test against sorted differences and scipy."""
    rng = np.random.default_rng(3)
    for _ in range(200):
        m = int(rng.integers(1, 10))
        x, y = rng.random(m), rng.random(m)
        assert emd(x, y) == pytest.approx(emd_sorted(x, y), abs=1e-12)
        z = rng.random(int(rng.integers(1, 10)))
        assert emd(x, z) == pytest.approx(
            wasserstein_distance(x, z), abs=1e-12)


def test_emd_is_a_metric():
    """Test identity, permutation invariance, symmetry and the triangle."""
    rng = np.random.default_rng(17)
    for _ in range(300):
        x, y, z = (rng.random(int(rng.integers(1, 12))) for _ in range(3))
        assert emd(x, x) == pytest.approx(0.0, abs=1e-12)
        assert emd(x, rng.permutation(x)) == pytest.approx(0.0, abs=1e-12)
        assert emd(x, y) >= 0.0
        assert emd(x, y) == pytest.approx(emd(y, x), abs=1e-12)
        assert emd(x, z) <= emd(x, y) + emd(y, z) + 1e-12


def test_emd_rejects():
    """Test empty and out of range slices."""
    with pytest.raises(InvalidObservationError):
        emd([], [0.5])
    with pytest.raises(InvalidObservationError):
        emd([1.5], [0.5])
    with pytest.raises(ValueError):
        emd_sorted([0.1], [0.1, 0.2])


@pytest.mark.parametrize(
    "name,values,expected,lipschitz",
    [
        ("mean", [0.0, 1.0], 0.5, 1.0),
        ("square", [0.5, 1.0], 0.625, 2.0),
        ("distance-to-half", [0.0, 0.5, 1.0], 1 / 3, 1.0),
    ],
)
def test_plugin_family(name, values, expected, lipschitz):
    """Test shipped plug-in families and their declared constants."""
    family = plugin_family(name)
    assert family(values) == pytest.approx(expected)
    assert family.smoothness == lipschitz
    assert family.concat_concave


def test_unknown_plugin():
    """Test unknown family names."""
    with pytest.raises(ValueError):
        plugin_family("median")


def test_family_rejects_empty():
    """Test statistics need a non-empty slice."""
    with pytest.raises(InvalidObservationError):
        mean_family()([])


@pytest.mark.parametrize(
    "family",
    [
        mean_family(), plugin_family("square"),
        plugin_family("distance-to-half"), emd_to_reference_family(),
        threshold_family(),
    ],
)
def test_evaluate_blocks_real(family):
    """Test vectorised block evaluation agrees with single slices."""
    values = np.random.default_rng(5).random(32)
    for width in (1, 2, 4, 16):
        expected = [family(b) for b in values.reshape(-1, width)]
        np.testing.assert_allclose(
            family.evaluate_blocks(values, width), expected, atol=1e-12)


def test_evaluate_blocks_symbols():
    """Test learnability blocks agree with single slices."""
    rng = np.random.default_rng(6)
    family = learnability_family(random_model_class(4, 5, rng))
    values = rng.integers(0, 5, size=16)
    for width in (1, 4, 8):
        expected = [family(b) for b in values.reshape(-1, width)]
        np.testing.assert_allclose(
            family.evaluate_blocks(values, width), expected, atol=1e-12)


def test_evaluate_blocks_indivisible():
    """Test blocks must tile the input."""
    with pytest.raises(ValueError):
        mean_family().evaluate_blocks(np.zeros(6), 4)


def test_model_class():
    """Test model class validation and average losses."""
    with pytest.raises(ValueError):
        ModelClass.from_tables([(0.0, 1.5)])
    mc = ModelClass.from_tables([(0.0, 1.0), (1.0, 0.0)])
    assert mc.size == 2
    assert mc.alphabet_size == 2
    np.testing.assert_allclose(mc.average_losses([0, 0, 1]), [1 / 3, 2 / 3])
    with pytest.raises(InvalidObservationError):
        mc.average_losses([2])
    with pytest.raises(InvalidObservationError):
        mc.average_losses(np.array([0.7]))
    with pytest.raises(InvalidObservationError):
        learnability_family(mc)([0.0, 0.5])
    assert learnability_family(mc)(np.array([0.0, 1.0])) == \
        learnability_family(mc)([0, 1])
    np.testing.assert_allclose(
        mc.block_average_losses([0, 1, 1, 1], 2), [[0.5, 1.0], [0.5, 0.0]])


def test_max_of_means():
    """Test the planted family breaks concatenation-concavity."""
    family = max_of_means_family(ModelClass.from_tables([(0, 1), (1, 0)]))
    assert family([0]) == family([1]) == 1.0
    assert family([0, 1]) == 0.5


def test_random_model_class():
    """Test random tables are reproducible and in range."""
    a = random_model_class(3, 4, 11)
    b = random_model_class(3, 4, 11)
    np.testing.assert_array_equal(a.tables, b.tables)
    assert a.tables.shape == (3, 4)


@pytest.mark.parametrize(
    "family",
    [
        mean_family(),
        learnability_family(random_model_class(8, 6, 1)),
    ],
)
def test_concat_concave_holds(family):
    """Test no violations for concatenation-concave families."""
    report = check_concat_concave(family, 2000, rng_seed=1)
    assert report.passed
    assert report.checked == 2000


def test_concat_concave_planted():
    """Test the checker finds the planted counterexample."""
    family = max_of_means_family(ModelClass.from_tables([(0, 1), (1, 0)]))
    report = check_concat_concave(family, 500, rng_seed=2)
    assert report.violations >= 1
    assert report.witness is not None


@pytest.mark.parametrize(
    "family,lipschitz,passes",
    [
        (mean_family(), 1.0, True),
        (plugin_family("square"), 2.0, True),
        (plugin_family("distance-to-half"), 1.0, True),
        (emd_to_reference_family(), 1.0, True),
        (plugin_family("square"), 1.0, False),
        (plugin_family("square"), 0.5, False),
        (threshold_family(), 1.0, False),
    ],
)
def test_check_smooth(family, lipschitz, passes):
    """Test the smoothness checker on smooth and non-smooth families."""
    report = check_smooth(family, lipschitz, 2000, rng_seed=3)
    assert report.passed is passes


def test_square_smoothness_witness():
    """Test a pair breaking 0.5-smoothness of the square family."""
    square = plugin_family("square")
    x, y = [0.9, 0.9], [1.0, 1.0]
    gap = abs(square(x) - square(y))
    assert gap == pytest.approx(0.19)
    assert gap > 0.5 * emd(x, y)
    assert gap <= 2.0 * emd(x, y)


def test_check_smooth_symbols():
    """Test smoothness is only defined on reals."""
    family = learnability_family(random_model_class(2, 2, 0))
    with pytest.raises(ValueError):
        check_smooth(family, 1.0, 10)
