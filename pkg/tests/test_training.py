"""Tests for label encoding, SGD training, the NTK and the density-flow check."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netsym.core.correlators import standardized_difference
from netsym.core.ensembles import (
    gauss_net,
    jacobian,
    linear_net,
    relu_net,
    sample_network,
    sample_networks,
    t_layer_net,
)
from netsym.core.idx import DATA_DIR_ENV, load_fashion_mnist, to_dataset
from netsym.core.linalg import RngStream
from netsym.core.symmetry import GroupSpec, random_group_elements, transform_correlator
from netsym.core.training import (
    Dataset,
    TrainingConfig,
    TrainingDivergedError,
    breaking_architecture,
    breaking_init,
    decode_predictions,
    density_flow_check,
    empirical_ntk,
    encode_labels,
    ensemble_ntk,
    make_blobs,
    mean_activation,
    one_cold_experiment,
    predicted_one_cold_peak,
    sgd_train,
    train_grid,
)
from netsym.core.types import Encoder, GroupName, LossKind


@pytest.fixture
def blobs():
    return make_blobs(100, RngStream(0), num_classes=2, dim=2)


@pytest.fixture
def small_blobs():
    return make_blobs(10, RngStream(1), num_classes=3, dim=3)


@pytest.fixture(scope="module")
def fashion():
    train, test = load_fashion_mnist()
    return to_dataset(train, test)


class TestLabels:
    def test_one_hot(self):
        np.testing.assert_array_equal(encode_labels([0, 2], 3), [[1, 0, 0], [0, 0, 1]])

    def test_one_cold(self):
        np.testing.assert_array_equal(encode_labels([1], 3, Encoder.ONE_COLD), [[1, 0, 1]])

    def test_decode(self):
        outputs = np.array([[0.1, 0.9, 0.5]])
        assert decode_predictions(outputs)[0] == 1
        assert decode_predictions(outputs, "one-cold")[0] == 0

    @given(
        st.lists(st.integers(-1000, 1000), min_size=2, max_size=10, unique=True),
        st.floats(0.01, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_decode_ignores_positive_scale(self, values, scale):
        outputs = np.array([values], dtype=float)
        for encoder in Encoder:
            scaled = decode_predictions(scale * outputs, encoder)
            np.testing.assert_array_equal(scaled, decode_predictions(outputs, encoder))

    def test_out_of_range(self):
        with pytest.raises(ValueError, match="labels must lie"):
            encode_labels([3], 3)


class TestBlobs:
    def test_split_and_range(self, small_blobs):
        assert len(small_blobs.train_x) + len(small_blobs.test_x) == 30
        assert len(small_blobs.test_x) == 8
        assert small_blobs.input_dim == 3
        assert small_blobs.train_x.min() >= 0.0
        assert small_blobs.train_x.max() <= 1.0

    def test_reproducible(self):
        a = make_blobs(5, RngStream(3))
        b = make_blobs(5, RngStream(3))
        np.testing.assert_array_equal(a.train_x, b.train_x)

    def test_bad_arguments(self):
        with pytest.raises(ValueError, match="num_classes >= 2"):
            make_blobs(5, RngStream(0), num_classes=1)


class TestTrainingConfig:
    def test_defaults(self):
        config = TrainingConfig()
        assert (config.epochs, config.batch_size, config.learning_rate) == (20, 64, 0.001)
        assert config.loss is LossKind.MSE

    def test_string_enums(self):
        config = TrainingConfig(loss="so-invariant", encoder="one-cold")
        assert config.loss is LossKind.SO_INVARIANT
        assert config.encoder is Encoder.ONE_COLD

    def test_bad_epochs(self):
        with pytest.raises(ValueError, match="epochs must be >= 1"):
            TrainingConfig(epochs=0)

    def test_negative_learning_rate(self):
        with pytest.raises(ValueError, match="learning_rate"):
            TrainingConfig(learning_rate=-0.1)


class TestBreakingInit:
    def test_rows_and_mean(self):
        spec = breaking_architecture(4, 3, 6)
        net = breaking_init(spec, 2, 0.5, RngStream(4))
        prior = net.spec.layers[-1].weight_prior
        assert (prior.mean, prior.rows) == (0.5, 2)
        assert net.params[-1].weight.shape == (3, 6)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError, match="k out of range"):
            breaking_init(breaking_architecture(4, 3, 6), 4, 0.5, RngStream(0))

    def test_output_bias_rejected(self):
        spec = relu_net(2, 2, 4, sigma_b=0.5, output_bias=True)
        with pytest.raises(ValueError, match="without bias"):
            breaking_init(spec, 1, 0.5, RngStream(0))


class TestSGD:
    def test_linear_classifier_learns_blobs(self, blobs):
        net = sample_network(linear_net(2, 2, sigma_b=1.0), RngStream(5))
        config = TrainingConfig(epochs=30, batch_size=10, learning_rate=0.3)
        result = sgd_train(net, blobs, config)
        assert len(result.metrics) == 30
        assert result.max_accuracy >= 0.95
        assert result.metrics[-1].train_loss < result.metrics[0].train_loss

    def test_zero_learning_rate_keeps_parameters(self, blobs):
        net = sample_network(breaking_architecture(2, 2, 5), RngStream(6))
        result = sgd_train(net, blobs, TrainingConfig(epochs=2, learning_rate=0.0))
        np.testing.assert_array_equal(result.net.parameter_vector(), net.parameter_vector())
        assert result.metrics[0].accuracy == result.metrics[1].accuracy

    def test_same_seed_same_result(self, blobs):
        net = sample_network(breaking_architecture(2, 2, 5), RngStream(7))
        config = TrainingConfig(epochs=2, batch_size=16, learning_rate=0.05, seed=3)
        a = sgd_train(net, blobs, config)
        b = sgd_train(net, blobs, config)
        np.testing.assert_array_equal(a.net.parameter_vector(), b.net.parameter_vector())

    def test_divergence_raises(self, blobs):
        net = sample_network(linear_net(2, 2, sigma_w=10.0), RngStream(8))
        config = TrainingConfig(epochs=50, batch_size=10, learning_rate=1e6)
        with np.errstate(all="ignore"), pytest.raises(TrainingDivergedError) as info:
            sgd_train(net, blobs, config)
        assert not np.isfinite(info.value.loss)

    def test_invariant_loss_trains(self, blobs):
        net = sample_network(breaking_architecture(2, 2, 5), RngStream(9))
        config = TrainingConfig(epochs=3, batch_size=16, learning_rate=0.01, loss="so-invariant")
        assert len(sgd_train(net, blobs, config).metrics) == 3

    def test_batched_network_rejected(self, blobs):
        net = sample_networks(linear_net(2, 2), 2, RngStream(0))
        with pytest.raises(ValueError, match="single network"):
            sgd_train(net, blobs, TrainingConfig(epochs=1))

    def test_empty_dataset_rejected(self):
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), np.zeros((0, 2)), np.zeros(0), 2)
        net = sample_network(linear_net(2, 2), RngStream(0))
        with pytest.raises(ValueError, match="empty dataset"):
            sgd_train(net, empty, TrainingConfig(epochs=1))


class TestGrids:
    def test_train_grid_rows(self, small_blobs):
        config = TrainingConfig(epochs=2, batch_size=8, learning_rate=0.01)
        grid = train_grid(small_blobs, [0, 1], [0.0, 0.5], [0], config, width=5)
        assert len(grid.rows) == 2 * 2 * 2
        assert {(row.k, row.mu_W) for row in grid.rows} == {(0, 0.0), (0, 0.5), (1, 0.0), (1, 0.5)}
        assert 0.0 <= grid.mean_max_accuracy(1, 0.5) <= 1.0
        assert grid.csv_rows()[0][:3] == [0, 0, 0.0]

    def test_grid_independent_of_workers(self, small_blobs):
        config = TrainingConfig(epochs=1, batch_size=8, learning_rate=0.01)
        a = train_grid(small_blobs, [0, 2], [0.3], [0, 1], config, width=4, workers=1)
        b = train_grid(small_blobs, [0, 2], [0.3], [0, 1], config, width=4, workers=3)
        assert a.rows == b.rows

    def test_missing_cell(self, small_blobs):
        grid = train_grid(small_blobs, [0], [0.0], [0], TrainingConfig(epochs=1), width=3)
        with pytest.raises(ValueError, match="no runs"):
            grid.mean_max_accuracy(2, 0.0)

    def test_empty_grid(self, small_blobs):
        with pytest.raises(ValueError, match="empty"):
            train_grid(small_blobs, [], [0.0], [0], TrainingConfig())

    def test_one_cold_interval(self, small_blobs):
        config = TrainingConfig(epochs=2, batch_size=8, learning_rate=0.01)
        points, grid = one_cold_experiment(small_blobs, [0.0, 0.2], [0, 1, 2], config, width=5)
        assert [p.mu_W for p in points] == [0.0, 0.2]
        for p in points:
            assert p.ci_low <= p.mean_acc <= p.ci_high
        assert {row.k for row in grid.rows} == {3}

    def test_single_seed_interval_collapses(self, small_blobs):
        config = TrainingConfig(epochs=1, batch_size=8)
        (point,), _ = one_cold_experiment(small_blobs, [0.1], [0], config, width=3)
        assert point.ci_low == point.mean_acc == point.ci_high


class TestOneColdPeak:
    def test_prediction(self):
        assert predicted_one_cold_peak(0.5, 10) == pytest.approx(0.2)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError, match="positive activation"):
            predicted_one_cold_peak(0.0, 10)

    def test_mean_activation_of_relu_is_positive(self, small_blobs):
        net = sample_networks(breaking_architecture(3, 3, 8), 20, RngStream(10))
        assert mean_activation(net, small_blobs.test_x) > 0.0


class TestNTK:
    def test_empirical_matches_jacobian_product(self):
        net = sample_network(gauss_net(2, 3, 6), RngStream(11))
        x, x2 = np.array([0.3, -0.1]), np.array([0.5, 0.2])
        theta = empirical_ntk(net, x, x2)
        np.testing.assert_allclose(theta.mean, jacobian(net, x) @ jacobian(net, x2).T)
        assert not theta.ensemble

    def test_linear_ntk_is_exact(self):
        spec = linear_net(2, 3)
        x, x2 = np.array([1.0, 2.0]), np.array([0.5, -1.0])
        theta = ensemble_ntk(spec, x, x2, 10, RngStream(12), workers=2)
        # df_i/dW_ab = delta_ia x_b
        np.testing.assert_allclose(theta.mean, (x @ x2) * np.eye(3))
        assert theta.ensemble
        assert theta.samples == 10

    def test_ensemble_off_diagonal_vanishes(self):
        spec = gauss_net(2, 3, 8)
        theta = ensemble_ntk(spec, [0.3, -0.1], [0.5, 0.2], 4000, RngStream(13))
        off = ~np.eye(3, dtype=bool)
        assert np.all(np.abs(theta.mean[off]) <= 5 * theta.stderr[off])

    def test_rotated_ensemble_ntk_matches(self):
        theta = ensemble_ntk(relu_net(2, 3, 20), [0.3, -0.1], [0.5, 0.2], 4000, RngStream(16))
        g = theta.to_correlator()
        group = GroupSpec(GroupName.SO, 3)
        z = [
            standardized_difference(rotated.mean, rotated.stderr, g.mean, g.stderr)
            for rotated in (
                transform_correlator(g, element)
                for element in random_group_elements(group, 20, RngStream(17))
            )
        ]
        assert np.mean(np.stack(z) <= 3.0) >= 0.95

    @pytest.mark.slow
    def test_ensemble_stderr_falls_with_root_samples(self):
        spec = relu_net(2, 3, 8)
        x, x2 = [0.3, -0.1], [0.5, 0.2]
        small = ensemble_ntk(spec, x, x2, 4000, RngStream(18))
        large = ensemble_ntk(spec, x, x2, 16_000, RngStream(19))
        ratio = np.mean(np.diag(small.stderr) / np.diag(large.stderr))
        assert ratio == pytest.approx(2.0, rel=0.1)

    @pytest.mark.slow
    def test_draw_spread_shrinks_with_width(self):
        x, x2 = [0.3, -0.1], [0.5, 0.2]
        spread = {}
        for width in (10, 500):
            theta = ensemble_ntk(relu_net(2, 3, width), x, x2, 2000, RngStream(20))
            spread[width] = np.mean(np.diag(theta.stderr)) * np.sqrt(theta.samples)
        assert spread[500] < 0.5 * spread[10]

    def test_t_layer_boundary_hits_counted(self):
        spec = t_layer_net(1, 1, 2, weight=[[1.0], [0.5]])
        net = sample_network(spec, RngStream(14))
        assert empirical_ntk(net, np.array([2.0]), np.array([0.3])).boundary_hits == 2

    def test_single_network_only(self):
        net = sample_networks(linear_net(2, 2), 2, RngStream(0))
        with pytest.raises(ValueError, match="single network"):
            empirical_ntk(net, np.zeros(2), np.zeros(2))

    def test_samples_must_be_at_least_two(self):
        with pytest.raises(ValueError, match="samples must be >= 2"):
            ensemble_ntk(linear_net(2, 2), np.zeros(2), np.zeros(2), 1, RngStream(0))


class TestDensityFlow:
    def test_untrained_ensemble_is_symmetric(self, blobs):
        spec = relu_net(2, 2, 6)
        flow = density_flow_check(
            spec, blobs, 0, "mse", RngStream(15), members=500, experiments=4, elements=10
        )
        assert set(flow.reports) == {1, 2}
        assert flow.reports[1].pass_fraction == 1.0
        assert flow.to_dict()["loss"] == "mse"

    def test_bad_arguments(self, blobs):
        with pytest.raises(ValueError, match="steps must be non-negative"):
            density_flow_check(relu_net(2, 2, 4), blobs, -1, "mse", RngStream(0))
        with pytest.raises(ValueError, match="experiments must be >= 2"):
            density_flow_check(relu_net(2, 2, 4), blobs, 1, "mse", RngStream(0), experiments=1)

    @pytest.mark.slow
    def test_invariant_loss_preserves_symmetry_and_mse_breaks_it(self, blobs):
        spec = relu_net(2, 2, 10)
        kwargs = dict(members=2000, experiments=10, elements=50, learning_rate=0.05)
        invariant = density_flow_check(spec, blobs, 20, "so-invariant", RngStream(16), **kwargs)
        mse = density_flow_check(spec, blobs, 20, "mse", RngStream(16), **kwargs)
        assert invariant.reports[1].pass_fraction >= 0.5
        assert invariant.reports[2].pass_fraction >= 0.75
        assert mse.reports[1].mu_M > mse.reports[1].delta_M


@pytest.mark.skipif(DATA_DIR_ENV not in os.environ, reason="Fashion-MNIST files not available")
class TestFashionMNIST:
    def test_shapes(self):
        train, test = load_fashion_mnist()
        dataset = to_dataset(train, test, limit=1000)
        assert dataset.input_dim == 784
        assert len(dataset.train_x) == 1000
        assert len(dataset.test_x) == 10_000
        assert dataset.num_classes == 10

    @pytest.mark.slow
    def test_breaking_lowers_accuracy(self, fashion):
        config = TrainingConfig(epochs=2, batch_size=64, learning_rate=0.001)
        grid = train_grid(fashion, [0, 10], [0.0, 0.1, 0.2], [0, 1, 2], config, width=50)
        broken = grid.mean_max_accuracy(10, 0.2)
        for mu in (0.0, 0.1, 0.2):
            assert grid.mean_max_accuracy(0, mu) - broken >= 0.01
        for k in (0, 10):
            assert grid.mean_max_accuracy(k, 0.0) - broken >= 0.01

    @pytest.mark.slow
    def test_one_cold_peaks_at_small_mean(self, fashion):
        config = TrainingConfig(epochs=2, batch_size=64, learning_rate=0.001)
        points, _ = one_cold_experiment(fashion, [0.0, 0.03, 0.2], [0, 1, 2], config, width=50)
        acc = {p.mu_W: p.mean_acc for p in points}
        assert acc[0.03] - acc[0.0] >= 0.005
        assert acc[0.03] - acc[0.2] >= 0.005
