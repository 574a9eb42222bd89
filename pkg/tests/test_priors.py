"""Tests for parameter priors and the quartic Metropolis sampler."""

import numpy as np
import pytest

from netsym.core.linalg import RngStream
from netsym.core.types import PriorKind
from netsym.priors import (
    GaussianPrior,
    QuarticPrior,
    UniformCirclePrior,
    metropolis_sample,
    prior_from_dict,
    quartic_moment_quadrature,
)


class TestGaussianPrior:
    def test_shapes(self):
        prior = GaussianPrior(std=2.0)
        assert prior.sample((3, 4), RngStream(0)).shape == (3, 4)
        assert prior.sample((3, 4), RngStream(0), count=5).shape == (5, 3, 4)

    def test_moments(self):
        draws = GaussianPrior(mean=1.0, std=0.5).sample((200_000,), RngStream(1))
        assert draws.mean() == pytest.approx(1.0, abs=0.01)
        assert draws.std() == pytest.approx(0.5, abs=0.01)

    def test_rows_break_leading_entries_only(self):
        draws = GaussianPrior(mean=3.0, std=0.1, rows=2).sample((4, 5), RngStream(2), count=2000)
        means = draws.mean(axis=(0, 2))
        np.testing.assert_allclose(means[:2], 3.0, atol=0.01)
        np.testing.assert_allclose(means[2:], 0.0, atol=0.01)

    def test_too_many_rows(self):
        with pytest.raises(ValueError, match="cannot break 5 rows"):
            GaussianPrior(mean=1.0, rows=5).sample((4, 2), RngStream(0))

    def test_zero_mean(self):
        assert GaussianPrior().is_zero_mean()
        assert GaussianPrior(mean=1.0, rows=0).is_zero_mean()
        assert not GaussianPrior(mean=1.0).is_zero_mean()

    def test_bad_std(self):
        with pytest.raises(ValueError, match="std must be positive"):
            GaussianPrior(std=0.0)

    def test_dict_round_trip(self):
        prior = prior_from_dict(GaussianPrior(mean=0.5, std=2.0, rows=3).to_dict())
        assert isinstance(prior, GaussianPrior)
        assert (prior.mean, prior.std, prior.rows) == (0.5, 2.0, 3)


class TestUniformCirclePrior:
    def test_range_and_mean(self):
        draws = UniformCirclePrior().sample((100_000,), RngStream(3))
        assert draws.min() >= 0.0
        assert draws.max() < 1.0
        assert draws.mean() == pytest.approx(0.5, abs=0.01)

    def test_not_zero_mean(self):
        assert not UniformCirclePrior().is_zero_mean()
        assert UniformCirclePrior().kind is PriorKind.UNIFORM_CIRCLE


class TestPriorFromDict:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown prior kind"):
            prior_from_dict({"kind": "laplace"})

    def test_bad_parameters(self):
        with pytest.raises(ValueError, match="bad gaussian prior parameters"):
            prior_from_dict({"kind": "gaussian", "scale": 1.0})

    def test_quartic(self):
        prior = prior_from_dict({"kind": "quartic", "std": 0.5, "coupling": 0.01})
        assert isinstance(prior, QuarticPrior)
        assert prior.coupling == 0.01


class TestQuarticPrior:
    def test_zero_coupling_is_gaussian(self):
        a = QuarticPrior(std=0.7).sample((3,), RngStream(4), count=10)
        b = RngStream(4).normal(0.0, 0.7, (10, 3))
        np.testing.assert_array_equal(a, b)

    def test_negative_coupling_rejected(self):
        with pytest.raises(ValueError, match="coupling must be non-negative"):
            QuarticPrior(coupling=-0.1)

    def test_log_density(self):
        prior = QuarticPrior(std=1.0, coupling=0.5)
        theta = np.array([[1.0, 1.0]])
        # S = 2: -2/2 - 0.5 * 4
        assert prior.log_density(theta)[0] == pytest.approx(-3.0)

    def test_quadrature_gaussian_limit(self):
        assert quartic_moment_quadrature(0.5, 0.0, 2) == pytest.approx(0.25, rel=1e-10)
        assert quartic_moment_quadrature(0.5, 0.0, 4) == pytest.approx(3 * 0.5**4, rel=1e-10)

    def test_quadrature_coupling_shrinks_variance(self):
        assert quartic_moment_quadrature(1.0, 0.1, 2) < 1.0


class TestMetropolis:
    def test_shapes_and_chain_ids(self):
        prior = QuarticPrior(std=1.0, coupling=0.1)
        result = metropolis_sample(
            prior, (2, 3), RngStream(5), 50, burn_in=200, thinning=2, chains=8
        )
        assert result.draws.shape == (50, 2, 3)
        assert len(result.chain_ids) == 50
        assert set(result.chain_ids) == set(range(8))
        assert 0.0 < result.acceptance_rate < 1.0

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError, match="count must be >= 1"):
            metropolis_sample(QuarticPrior(coupling=0.1), (2,), RngStream(0), 0)

    def test_bad_thinning(self):
        with pytest.raises(ValueError, match="thinning"):
            metropolis_sample(QuarticPrior(coupling=0.1), (2,), RngStream(0), 4, thinning=0)

    def test_bad_burn_in(self):
        with pytest.raises(ValueError, match="burn_in"):
            QuarticPrior(coupling=0.1, burn_in=-1)

    def test_reproducible(self):
        prior = QuarticPrior(std=1.0, coupling=0.2, burn_in=100)
        a = prior.sample((2,), RngStream(9), count=20)
        b = prior.sample((2,), RngStream(9), count=20)
        np.testing.assert_array_equal(a, b)

    def test_scalar_second_moment_matches_quadrature(self):
        prior = QuarticPrior(std=0.5, coupling=0.01)
        result = metropolis_sample(
            prior, (1,), RngStream(6), 40_000, burn_in=2000, thinning=5, chains=64
        )
        values = result.draws[:, 0] ** 2
        expected = quartic_moment_quadrature(0.5, 0.01, 2)
        stderr = float(result.chain_stderr(values))
        assert abs(values.mean() - expected) <= 4 * stderr

    def test_zero_coupling_chain_matches_direct_gaussian(self):
        prior = QuarticPrior(std=0.5, coupling=0.0)
        result = metropolis_sample(
            prior, (2,), RngStream(8), 40_000, burn_in=2000, thinning=5, chains=64
        )
        direct = GaussianPrior(std=0.5).sample((2,), RngStream(9), count=40_000)
        for power in (2, 4):
            chain = result.draws[:, 0] ** power
            exact = direct[:, 0] ** power
            chain_err = float(result.chain_stderr(chain))
            direct_err = exact.std(ddof=1) / np.sqrt(len(exact))
            gap = abs(chain.mean() - exact.mean())
            assert gap <= 3 * np.hypot(chain_err, direct_err)

    def test_strong_coupling_second_moment(self):
        prior = QuarticPrior(std=1.0, coupling=1.0)
        result = metropolis_sample(
            prior, (1,), RngStream(7), 40_000, burn_in=2000, thinning=5, chains=64
        )
        values = result.draws[:, 0] ** 2
        expected = quartic_moment_quadrature(1.0, 1.0, 2)
        assert abs(values.mean() - expected) <= 4 * float(result.chain_stderr(values))
