import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablegames.data import BinnedData
from stablegames.game_core import CovariateBin


def make(counts, covs=("const", "x")):
    rng = np.random.default_rng(len(counts))
    bins = [CovariateBin((1.0, 0.5 * k), 1.0, n) for k, n in enumerate(counts)]
    return BinnedData(covs, bins, rng.dirichlet(np.ones(4), len(counts)))


class TestBinnedData:
    def test_count_weights(self):
        np.testing.assert_allclose(make([10, 30]).weights("count"), [0.25, 0.75])
        np.testing.assert_allclose(make([10, 30]).weights("uniform"), [0.5, 0.5])

    def test_population_falls_back_to_equal_weights(self):
        d = make([0, 0, 0])
        assert d.population
        np.testing.assert_allclose(d.weights("count"), np.full(3, 1 / 3))

    def test_drop_empty(self, caplog):
        with caplog.at_level(logging.WARNING):
            d = make([5, 0, 7]).drop_empty()
        assert d.n_bins == 2 and "dropping 1 bin" in caplog.text
        with pytest.raises(ValueError):
            make([0, 0]).drop_empty()

    def test_validation(self):
        with pytest.raises(ValueError):
            BinnedData(("c",), [CovariateBin((1.0,))], np.array([[0.5, 0.5, 0.5, 0.0]]))
        with pytest.raises(ValueError):
            BinnedData(("c", "d"), [CovariateBin((1.0,))], np.array([[0.25] * 4]))

    def test_missing_columns(self):
        with pytest.raises(ValueError):
            BinnedData.from_csv("x_c,phi_00\n1,1\n")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 10_000), min_size=1, max_size=6))
    def test_csv_roundtrip(self, counts):
        d = make(counts)
        back = BinnedData.from_csv(d.to_csv(["comment = yes"]))
        np.testing.assert_array_equal(back.phi, d.phi)
        np.testing.assert_array_equal(back.counts, d.counts)
        assert back.covariates == d.covariates and back.profiles == d.profiles
        np.testing.assert_array_equal([b.x for b in back.bins], [b.x for b in d.bins])
