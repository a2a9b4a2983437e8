"""Tests for the order-independent reductions."""

import math

import numpy as np
import pytest

from egolayers.analysis.stats import Z95, PairMoments, mean_ci95, pearson
from egolayers.errors import InsufficientDataError, UndefinedCorrelationError


class TestPairMoments:
    def test_line(self):
        m = PairMoments.from_arrays([0, 1, 2, 3], [1, 3, 5, 7])
        assert m.slope() == pytest.approx(2.0)
        assert m.intercept() == pytest.approx(1.0)
        assert m.pearson() == pytest.approx(1.0)

    def test_split_sums_match_whole(self):
        rng = np.random.default_rng(0)
        x = rng.random(1000)
        y = 0.5 * x + rng.normal(0, 0.1, 1000)
        whole = PairMoments.from_arrays(x, y)
        parts = sum(
            (PairMoments.from_arrays(x[i : i + 100], y[i : i + 100]) for i in range(0, 1000, 100)),
            PairMoments(),
        )
        assert parts.n == whole.n
        assert parts.slope() == pytest.approx(whole.slope(), rel=1e-12)
        assert parts.pearson() == pytest.approx(whole.pearson(), rel=1e-12)

    def test_matches_numpy(self):
        rng = np.random.default_rng(1)
        x = rng.random(50)
        y = rng.random(50)
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1])

    def test_constant_x(self):
        m = PairMoments.from_arrays([0.3, 0.3, 0.3], [1.0, 2.0, 4.0])
        with pytest.raises(UndefinedCorrelationError):
            m.slope()
        with pytest.raises(UndefinedCorrelationError):
            m.pearson()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ in shape"):
            PairMoments.from_arrays([1, 2], [1, 2, 3])

    def test_adding_other_types(self):
        with pytest.raises(TypeError):
            PairMoments() + 1


class TestPearson:
    def test_needs_three_points(self):
        with pytest.raises(InsufficientDataError):
            pearson([1, 2], [2, 1])

    def test_anticorrelated(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


class TestMeanCi95:
    def test_empty(self):
        e = mean_ci95([])
        assert e.n == 0
        assert math.isnan(e.mean)

    def test_single_value(self):
        e = mean_ci95([4.0])
        assert e.mean == 4.0
        assert math.isnan(e.ci95)

    def test_interval(self):
        e = mean_ci95([1.0, 2.0, 3.0])
        assert e.mean == 2.0
        assert e.ci95 == pytest.approx(Z95 * math.sqrt(1.0 / 3))

    def test_z_value(self):
        assert Z95 == pytest.approx(1.959964, abs=1e-6)
