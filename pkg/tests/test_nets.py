"""Substrate tests: forward/backward correctness, optimizer, targets."""
import numpy as np
import pytest

from commlab.nets import (DenseNetwork, NumericError, Optimizer, ShapeError,
                          TargetCopy, finite_difference_grads)


def relative_error(a, b):
    return np.abs(a - b) / (np.abs(b) + 1e-8)


class TestForward:
    def test_identity_single_layer(self):
        net = DenseNetwork([2, 2])
        net.weights[0] = np.eye(2)
        net.biases[0] = np.zeros(2)
        out = net.forward(np.array([1.0, 2.0]))
        assert np.array_equal(out, [1.0, 2.0])

    def test_zero_weights_bias_only(self):
        net = DenseNetwork([3, 1])
        net.weights[0][:] = 0.0
        net.biases[0][:] = 0.5
        for x in ([0.0, 0.0, 0.0], [9.0, -4.0, 2.5]):
            assert net.forward(np.array(x)) == pytest.approx([0.5])

    def test_two_layer_matches_hand_rolled_oracle(self):
        net = DenseNetwork([2, 3, 2], seed=42)
        x = np.array([1.0, 0.0])
        # straight-line matrix arithmetic, independent of the class
        z1 = net.weights[0] @ x + net.biases[0]
        a1 = np.maximum(z1, 0.0)
        expected = net.weights[1] @ a1 + net.biases[1]
        assert np.array_equal(net.forward(x), expected)

    def test_dimension_mismatch_rejected(self):
        net = DenseNetwork([4, 2])
        with pytest.raises(ShapeError):
            net.forward(np.zeros(3))

    def test_batched_forward_matches_loop(self):
        net = DenseNetwork([3, 5, 2], seed=1)
        xs = np.random.default_rng(0).normal(size=(7, 3))
        batched = net.forward(xs)
        looped = np.stack([net.forward(x) for x in xs])
        assert batched == pytest.approx(looped, rel=1e-12)

    def test_seeded_construction_identical(self):
        a = DenseNetwork([4, 8, 3], seed=7)
        b = DenseNetwork([4, 8, 3], seed=7)
        assert a.digest() == b.digest()

    def test_bad_layer_sizes_rejected(self):
        for sizes in ([3], [3, 0], [], [2, -1, 2]):
            with pytest.raises(ShapeError):
                DenseNetwork(sizes)

    def test_init_within_fan_in_bound(self):
        net = DenseNetwork([16, 4], seed=3)
        bound = 1.0 / np.sqrt(16)
        assert np.abs(net.weights[0]).max() <= bound


class TestBackward:
    def test_linear_weight_gradient(self):
        # y = w*x with x = 2 and unit output gradient: dL/dw = 2.
        net = DenseNetwork([1, 1])
        net.biases[0][:] = 0.0
        grads = net.backward(np.array([2.0]), np.array([1.0]))
        assert grads[0][0, 0] == pytest.approx(2.0)

    def test_bias_gradient(self):
        net = DenseNetwork([1, 1])
        grads = net.backward(np.array([0.0]), np.array([3.0]))
        assert grads[1] == pytest.approx([3.0])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        net = DenseNetwork([3, 4, 2], seed=5)
        x = rng.normal(size=3)
        g = rng.normal(size=2)
        analytic = net.backward(x, g)
        numeric = finite_difference_grads(net, x, g)
        for a, n in zip(analytic, numeric):
            assert relative_error(a, n).max() < 1e-4

    def test_batch_gradient_is_sum(self):
        net = DenseNetwork([2, 3, 1], seed=9)
        xs = np.random.default_rng(2).normal(size=(4, 2))
        gs = np.ones((4, 1))
        batched = net.backward(xs, gs)
        summed = None
        for x, g in zip(xs, gs):
            one = net.backward(x, g)
            summed = one if summed is None else [a + b for a, b in zip(summed, one)]
        for a, b in zip(batched, summed):
            assert a == pytest.approx(b)

    def test_gradient_shapes_mirror_parameters(self):
        net = DenseNetwork([5, 7, 3], seed=0)
        grads = net.backward(np.zeros(5), np.ones(3))
        for g, p in zip(grads, net.parameters()):
            assert g.shape == p.shape

    def test_nonfinite_gradient_rejected(self):
        net = DenseNetwork([2, 2], seed=0)
        with pytest.raises(NumericError):
            net.backward(np.array([1.0, 1.0]), np.array([np.inf, 0.0]))


class TestOptimizer:
    def test_sgd_single_step(self):
        net = DenseNetwork([1, 1])
        net.weights[0][:] = 1.0
        opt = Optimizer(lr=0.1, mode="sgd")
        grads = [np.array([[2.0]]), np.zeros(1)]
        opt.step(net, grads)
        assert net.weights[0][0, 0] == pytest.approx(0.8)

    def test_zero_gradient_no_change(self):
        net = DenseNetwork([3, 2], seed=4)
        before = net.digest()
        opt = Optimizer(mode="sgd")
        opt.step(net, [np.zeros_like(p) for p in net.parameters()])
        assert net.digest() == before

    def test_replay_equality(self):
        def run():
            net = DenseNetwork([2, 4, 1], seed=8)
            opt = Optimizer(lr=1e-3, mode="adam")
            rng = np.random.default_rng(3)
            for _ in range(20):
                x = rng.normal(size=2)
                g = rng.normal(size=1)
                opt.step(net, net.backward(x, g))
            return net.digest()

        assert run() == run()

    def test_step_counter_monotone(self):
        net = DenseNetwork([1, 1])
        opt = Optimizer(mode="sgd")
        zeros = [np.zeros_like(p) for p in net.parameters()]
        for expected in (1, 2, 3):
            opt.step(net, zeros)
            assert opt.step_count == expected

    def test_shape_mismatch_rejected(self):
        net = DenseNetwork([2, 2])
        opt = Optimizer(mode="sgd")
        with pytest.raises(ShapeError):
            opt.step(net, [np.zeros((3, 3)), np.zeros(2)])

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            Optimizer(lr=0.0)
        with pytest.raises(ValueError):
            Optimizer(mode="momentum")


class TestTargetCopy:
    def test_sync_gives_identical_outputs(self):
        net = DenseNetwork([3, 4, 2], seed=1)
        target = TargetCopy(net)
        net.weights[0] += 0.5
        target.sync(net)
        x = np.array([0.3, -0.2, 1.0])
        assert np.array_equal(target.forward(x), net.forward(x))

    def test_stale_after_update(self):
        net = DenseNetwork([2, 2], seed=2)
        target = TargetCopy(net)
        x = np.array([1.0, 2.0])
        before = target.forward(x)
        net.weights[0] += 1.0
        assert np.array_equal(target.forward(x), before)
        assert not np.array_equal(target.forward(x), net.forward(x))

    def test_staleness_counter(self):
        net = DenseNetwork([1, 1])
        target = TargetCopy(net)
        target.tick()
        target.tick()
        assert target.staleness == 2
        target.sync(net)
        assert target.staleness == 0


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        net = DenseNetwork([4, 6, 3], seed=13)
        net.weights[1] += 0.25
        path = tmp_path / "net.json"
        net.save(path)
        loaded = DenseNetwork.load(path)
        assert loaded.digest() == net.digest()
        assert loaded.layer_sizes == net.layer_sizes

    def test_version_checked(self, tmp_path):
        net = DenseNetwork([2, 2])
        path = tmp_path / "net.json"
        net.save(path)
        doc = path.read_text().replace('"version": 1', '"version": 99')
        path.write_text(doc)
        with pytest.raises(ValueError):
            DenseNetwork.load(path)
