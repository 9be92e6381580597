#!/usr/bin/env python3
"""
Tests for the surrogate networks and weight files
"""

import os
import tempfile
import unittest

import numpy as np

from level import N_CHANNELS, SIZE, Level, encode_level
from level_generator import generate_level
from surrogate import (
    MODEL_KINDS,
    Conv2D,
    MaxPool2D,
    ModelFormatError,
    ShapeError,
    build_model,
    elu,
    load_model,
    mse_loss,
    save_model,
)


def batch(n, seed=0):
    rng = np.random.default_rng(seed)
    channels = np.stack([encode_level(generate_level(seed + i)) for i in range(n)]).astype(np.float32)
    params = rng.random((n, 16)).astype(np.float32)
    return channels, params


class TestLayers(unittest.TestCase):
    """Test cases for the building blocks"""

    def test_elu(self):
        """ELU is identity above zero and exp(x)-1 below"""
        x = np.array([-2.0, 0.0, 3.0])
        np.testing.assert_allclose(elu(x), [np.expm1(-2.0), 0.0, 3.0])

    def test_conv_keeps_spatial_size(self):
        """Same padding keeps 20x20"""
        conv = Conv2D("c", N_CHANNELS, 4, np.random.default_rng(0))
        out, _ = conv.forward(np.zeros((2, N_CHANNELS, SIZE, SIZE), np.float32))
        self.assertEqual(out.shape, (2, 4, SIZE, SIZE))

    def test_pool_halves(self):
        """2x2 pooling halves both spatial axes and keeps the maximum"""
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        out, cache = MaxPool2D("p").forward(x)
        np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])
        dx, _ = MaxPool2D("p").backward(np.ones_like(out), cache)
        self.assertEqual(dx.sum(), 4)
        self.assertEqual(dx[0, 0, 1, 1], 1)

    def test_pool_rejects_odd_sizes(self):
        """Odd spatial sizes cannot be pooled"""
        with self.assertRaises(ShapeError):
            MaxPool2D("p").forward(np.zeros((1, 1, 5, 4)))


class TestModels(unittest.TestCase):
    """Test cases for the four model kinds"""

    def test_output_shape(self):
        """Every kind maps a batch to (N, 2)"""
        channels, params = batch(3)
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                self.assertEqual(build_model(kind, seed=1)(channels, params).shape, (3, 2))

    def test_cnn_layout(self):
        """The map branch flattens to 800 features"""
        model = build_model("cnn")
        features, _ = model.map_features(batch(2)[0])
        self.assertEqual(features.shape, (2, 800))
        shapes = dict((name, value.shape) for name, value in model.parameters())
        self.assertEqual(shapes["conv1.W"], (16, N_CHANNELS, 5, 5))
        self.assertEqual(shapes["conv2.W"], (32, 16, 5, 5))
        self.assertEqual(shapes["class_dense.W"], (16, 8))
        self.assertEqual(shapes["hidden.W"], (808, 128))
        self.assertEqual(shapes["output.W"], (128, 2))

    def test_wrong_channel_shape(self):
        """Inputs with the wrong grid are rejected"""
        model = build_model("cnn")
        with self.assertRaises(ShapeError):
            model(np.zeros((1, N_CHANNELS, 10, 10), np.float32), np.zeros((1, 16), np.float32))

    def test_wrong_param_count(self):
        """Parameter rows need 16 values"""
        channels, _ = batch(1)
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                with self.assertRaises(ShapeError):
                    build_model(kind)(channels, np.zeros((1, 15), np.float32))

    def test_unknown_kind(self):
        """Unknown kinds are rejected"""
        with self.assertRaises(ValueError):
            build_model("transformer")

    def test_seeded_init(self):
        """Same seed gives identical weights"""
        a, b = build_model("cnn", seed=4), build_model("cnn", seed=4)
        for (name, x), (_, y) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(x, y, err_msg=name)

    def test_prediction_clamped(self):
        """Clamped copies lie in [0, 1] while raw outputs are kept"""
        channels, params = batch(4)
        model = build_model("linear", seed=2)
        model.layers[-1].params["b"][:] = [5.0, -5.0]
        prediction = model.predict(channels, params)
        self.assertTrue(np.all(prediction.score > 1.0))
        np.testing.assert_array_equal(prediction.score_clamped, np.ones(4))
        np.testing.assert_array_equal(prediction.duration_clamped, np.zeros(4))

    def test_predict_outcomes_shares_level(self):
        """A single level broadcast over many parameter rows matches the batched call"""
        level = generate_level(3)
        channels = encode_level(level).astype(np.float32)
        params = np.random.default_rng(1).random((5, 16)).astype(np.float32)
        for kind in ("cnn", "mlp16"):
            with self.subTest(kind=kind):
                model = build_model(kind, seed=6)
                shared = model.predict_outcomes(channels, params)
                stacked = model(np.repeat(channels[np.newaxis], 5, axis=0), params)
                np.testing.assert_allclose(shared, stacked, rtol=1e-5, atol=1e-6)

    def test_float64_copy(self):
        """astype produces an independent model of the requested dtype"""
        model = build_model("perceptron", seed=3)
        wide = model.astype(np.float64)
        self.assertEqual(wide.dtype, np.float64)
        self.assertEqual(model.dtype, np.float32)

    def test_load_state_dict_rejects_missing_tensors(self):
        """State dicts must name every tensor"""
        model = build_model("mlp16")
        state = model.state_dict()
        del state["hidden.b"]
        with self.assertRaises(ModelFormatError):
            model.load_state_dict(state)


class TestForwardBackward(unittest.TestCase):
    """Test cases for exact forward values and gradient scaling"""

    def test_zero_weights_give_zero_output(self):
        """With every tensor zeroed each kind outputs (0, 0)"""
        channels, params = batch(2, seed=4)
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                model = build_model(kind, seed=1)
                for _, value in model.parameters():
                    value[...] = 0.0
                np.testing.assert_array_equal(model(channels, params), np.zeros((2, 2)))

    def test_linear_hand_computed(self):
        """The linear baseline is x @ W + b over flattened map bits then parameters"""
        channels, params = batch(2, seed=2)
        model = build_model("linear", seed=5).astype(np.float64)
        weights = dict(model.parameters())
        x = np.concatenate([channels.reshape(2, -1), params], axis=1).astype(np.float64)
        expected = x @ weights["output.W"] + weights["output.b"]
        np.testing.assert_allclose(model(channels, params), expected, rtol=0, atol=1e-12)

        single = np.zeros((1, N_CHANNELS, SIZE, SIZE))
        single[0, 3, 4, 5] = 1.0
        gene = np.zeros((1, 16))
        gene[0, 2] = 1.0
        weights["output.b"][:] = [0.25, -0.5]
        row = 3 * SIZE * SIZE + 4 * SIZE + 5
        col = N_CHANNELS * SIZE * SIZE + 2
        expected = weights["output.W"][row] + weights["output.W"][col] + [0.25, -0.5]
        np.testing.assert_allclose(model(single, gene)[0], expected, rtol=0, atol=1e-12)

    def test_linear_is_affine(self):
        """Mixing two inputs mixes the linear outputs with the same weights"""
        (c1, p1), (c2, p2) = batch(3, seed=1), batch(3, seed=7)
        c1, p1, c2, p2 = (x.astype(np.float64) for x in (c1, p1, c2, p2))
        model = build_model("linear", seed=3).astype(np.float64)
        for a in (0.0, 0.3, 1.0, 2.5):
            with self.subTest(a=a):
                mixed = model(a * c1 + (1 - a) * c2, a * p1 + (1 - a) * p2)
                expected = a * model(c1, p1) + (1 - a) * model(c2, p2)
                np.testing.assert_allclose(mixed, expected, rtol=0, atol=1e-9)

    def test_zero_loss_zero_gradients(self):
        """Targets equal to the outputs give zero loss and zero gradients"""
        channels, params = batch(2, seed=3)
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                model = build_model(kind, seed=2).astype(np.float64)
                outputs = model(channels, params)
                loss, grads = model.loss_and_gradients(channels, params, outputs.copy())
                self.assertEqual(loss, 0.0)
                np.testing.assert_array_equal(grads["output.W"], np.zeros_like(grads["output.W"]))
                np.testing.assert_array_equal(grads["output.b"], np.zeros_like(grads["output.b"]))
                for name, value in grads.items():
                    self.assertFalse(np.any(value), name)

    def test_doubled_loss_doubles_gradients(self):
        """Scaling the loss gradient by 2 scales every parameter gradient by 2"""
        channels, params = batch(2, seed=5)
        targets = np.random.default_rng(0).random((2, 2))
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                model = build_model(kind, seed=4).astype(np.float64)
                outputs, tape = model.forward(channels, params)
                _, doutputs = mse_loss(outputs, targets)
                single = model.backward(doutputs, tape)
                double = model.backward(2.0 * doutputs, tape)
                self.assertEqual(set(single), set(double))
                for name in single:
                    np.testing.assert_allclose(double[name], 2.0 * single[name], rtol=1e-12, atol=0, err_msg=name)


class TestWeightFiles(unittest.TestCase):
    """Test cases for save_model / load_model"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "model.cfw")

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_predictions(self):
        """A reloaded model predicts exactly as before"""
        channels, params = batch(2, seed=8)
        for kind in MODEL_KINDS:
            with self.subTest(kind=kind):
                model = build_model(kind, seed=9)
                save_model(model, self.path)
                loaded = load_model(self.path)
                self.assertEqual(loaded.kind, kind)
                np.testing.assert_array_equal(loaded(channels, params), model(channels, params))

    def test_bad_magic(self):
        """Foreign files are rejected"""
        with open(self.path, "wb") as handle:
            handle.write(b"XXXX" + bytes(64))
        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_truncated(self):
        """Short files are rejected"""
        save_model(build_model("linear"), self.path)
        with open(self.path, "rb") as handle:
            data = handle.read()
        with open(self.path, "wb") as handle:
            handle.write(data[:-12])
        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_trailing_bytes(self):
        """Extra bytes after the last tensor are rejected"""
        save_model(build_model("linear"), self.path)
        with open(self.path, "ab") as handle:
            handle.write(b"\0\0\0\0")
        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_layout_digest_checked(self):
        """A header whose digest does not match the kind is rejected"""
        save_model(build_model("perceptron"), self.path)
        with open(self.path, "r+b") as handle:
            handle.seek(4)
            handle.write(bytes(16))
        with self.assertRaises(ModelFormatError):
            load_model(self.path)

    def test_empty_level_prediction_is_finite(self):
        """Saved models handle the all-ground level"""
        model = build_model("cnn", seed=0)
        save_model(model, self.path)
        out = load_model(self.path).predict_outcomes(encode_level(Level.empty()), np.full(16, 0.5))
        self.assertTrue(np.all(np.isfinite(out)))


def run_tests():
    """Run all tests"""
    unittest.main(verbosity=2)


if __name__ == "__main__":
    run_tests()
