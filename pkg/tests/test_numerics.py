import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from viplo.numerics import (
    DegenerateRowError,
    DimensionError,
    MlpSpec,
    bilinear_sample,
    layer_norm,
    masked_softmax,
    matmul,
    mlp_forward,
)

import oracles


class TestMatmul:
    def test_identity(self, rng):
        a = rng.normal(size=(2, 2)).astype(np.float32)
        np.testing.assert_array_equal(matmul(np.eye(2), a), a)

    def test_hand_case(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])

    def test_against_triple_loop(self, rng):
        a = rng.normal(size=(8, 8)).astype(np.float32)
        b = rng.normal(size=(8, 8)).astype(np.float32)
        np.testing.assert_allclose(matmul(a, b), oracles.matmul_loops(a, b), atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_pure(self, rng):
        a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
        assert matmul(a, b).tobytes() == matmul(a, b).tobytes()


class TestMaskedSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(masked_softmax([0, 0, 0], [0, 0, 0]), [1 / 3] * 3, atol=1e-7)

    def test_full_mask_gives_exact_zero(self):
        out = masked_softmax([5, 5], [0, -np.inf])
        assert out[0] == 1.0 and out[1] == 0.0

    def test_log_bias_against_direct_exponentiation(self):
        logits, bias = [1.0, 2.0, 3.0], [math.log(0.5), 0.0, 0.0]
        expected = oracles.softmax_direct([a + b for a, b in zip(logits, bias)])
        np.testing.assert_allclose(masked_softmax(logits, bias), expected, atol=1e-6)

    def test_degenerate_row_raises(self):
        with pytest.raises(DegenerateRowError):
            masked_softmax([[1.0, 2.0], [0.0, 0.0]], [[0.0, 0.0], [-np.inf, -np.inf]])

    @settings(max_examples=200, deadline=None)
    @given(
        arrays(np.float64, (3, 6), elements=st.floats(-30, 30)),
        arrays(np.bool_, (3, 6)),
        st.floats(-50, 50),
    )
    def test_rows_normalised_and_shift_invariant(self, logits, masked, shift):
        masked[:, 0] = False  # keep one finite entry per row
        bias = np.where(masked, -np.inf, 0.0)
        out = masked_softmax(logits, bias)
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=-1, dtype=np.float64), 1.0, atol=1e-6)
        assert (out[masked] == 0).all()
        np.testing.assert_allclose(masked_softmax(logits + shift, bias), out, atol=1e-6)


class TestLayerNorm:
    def test_constant_row(self):
        np.testing.assert_array_equal(layer_norm(np.full((1, 4), 3.0), np.ones(4), np.zeros(4)), np.zeros((1, 4)))

    def test_zero_gain(self, rng):
        shift = rng.normal(size=5)
        out = layer_norm(rng.normal(size=(3, 5)), np.zeros(5), shift)
        np.testing.assert_allclose(out, np.broadcast_to(shift, (3, 5)), atol=1e-7)

    def test_against_two_pass(self, rng):
        row = rng.normal(size=16)
        g, b = rng.normal(size=16), rng.normal(size=16)
        np.testing.assert_allclose(layer_norm(row, g, b), oracles.layer_norm_two_pass(row, g, b), atol=1e-6)


class TestBilinear:
    def test_integer_coordinates(self, rng):
        m = rng.normal(size=(4, 5, 3))
        np.testing.assert_allclose(bilinear_sample(m, 2, 3), m[3, 2], atol=1e-7)

    def test_midpoint(self):
        m = np.array([[[0.0], [1.0]]])
        assert bilinear_sample(m, 0.5, 0.0)[0] == pytest.approx(0.5)

    def test_against_four_term(self, rng):
        m = rng.normal(size=(4, 4, 2))
        for _ in range(20):
            x, y = rng.uniform(0, 3, 2)
            np.testing.assert_allclose(bilinear_sample(m, x, y), oracles.bilinear_four_term(m, x, y), atol=1e-6)

    def test_clamped_outside(self, rng):
        m = rng.normal(size=(3, 3, 1))
        np.testing.assert_allclose(bilinear_sample(m, -5, 10), m[2, 0], atol=1e-7)

    def test_linear_along_edges(self, rng):
        m = rng.normal(size=(3, 3, 1))
        for t in np.linspace(0, 1, 7):
            np.testing.assert_allclose(bilinear_sample(m, 1 + t, 1), (1 - t) * m[1, 1] + t * m[1, 2], atol=1e-6)


class TestMlp:
    def test_zero_weights(self, rng):
        spec = MlpSpec([4, 3, 2])
        np.testing.assert_array_equal(mlp_forward(spec, rng.normal(size=(5, 4))), np.zeros((5, 2)))

    def test_identity_layer(self, rng):
        spec = MlpSpec([3, 3], [np.eye(3)], [np.zeros(3)])
        x = rng.normal(size=(2, 3)).astype(np.float32)
        np.testing.assert_array_equal(mlp_forward(spec, x), x)

    def test_against_loop(self, rng):
        spec = MlpSpec.random([5, 7, 3], rng, std=0.5)
        x = rng.normal(size=5)
        np.testing.assert_allclose(mlp_forward(spec, x), oracles.mlp_loops(spec, x), atol=1e-6)

    def test_width_mismatch(self):
        with pytest.raises(DimensionError):
            mlp_forward(MlpSpec([4, 2]), np.ones(3))

    def test_bad_weight_shapes(self):
        with pytest.raises(DimensionError):
            MlpSpec([4, 2], [np.ones((2, 4))], [np.ones(2)])
