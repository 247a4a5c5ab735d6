# Copyright (C) 2023 - 2024 ANSYS, Inc. and/or its affiliates.
# SPDX-License-Identifier: MIT
#
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.
"""Test module for the dense math helpers."""
import math

from conftest import relative_error
import numpy as np
import pytest

from ansys.tools.referring_segmentation.errors import NumericalError, ShapeMismatchError
from ansys.tools.referring_segmentation.numerics import (
    MlpParams,
    cosine_similarity,
    l2_normalize,
    mlp_backward,
    mlp_forward,
    softmax,
)


def test_softmax_examples():
    """Checks the symmetric and analytically forced cases."""
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(softmax([math.log(2.0), 0.0]), [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)


def test_softmax_matches_direct_exponentials():
    """Compares with exp/sum computed one scalar at a time."""
    values = [1.0, 2.0, 3.0]
    total = sum(math.exp(v) for v in values)
    np.testing.assert_allclose(softmax(values), [math.exp(v) / total for v in values], atol=1e-15)


def test_softmax_shift_invariance(rng):
    """Adding a constant to every logit leaves the output unchanged."""
    for _ in range(20):
        logits = rng.normal(size=6)
        shift = rng.uniform(-50.0, 50.0)
        np.testing.assert_allclose(softmax(logits + shift), softmax(logits), atol=1e-10)


def test_softmax_large_logits_are_stable():
    """Large logits do not overflow."""
    np.testing.assert_allclose(softmax([1000.0, 1000.0]), [0.5, 0.5])


def test_softmax_rejects_bad_input():
    """Empty or non-finite inputs raise."""
    with pytest.raises(NumericalError):
        softmax([])
    with pytest.raises(NumericalError):
        softmax([0.0, np.nan])


def test_l2_normalize_examples():
    """Checks the hand-computed cases."""
    np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])
    np.testing.assert_allclose(l2_normalize([0.0, 0.0, 5.0]), [0.0, 0.0, 1.0])


def test_l2_normalize_oracle_and_idempotence(rng):
    """Matches division by the norm and normalizing twice changes nothing."""
    vector = rng.normal(size=8)
    norm = math.sqrt(sum(v * v for v in vector))
    unit = l2_normalize(vector)
    np.testing.assert_allclose(unit, [v / norm for v in vector], atol=1e-15)
    np.testing.assert_allclose(l2_normalize(unit), unit, atol=1e-12)


def test_l2_normalize_zero_vector():
    """A zero vector cannot be normalized."""
    with pytest.raises(NumericalError):
        l2_normalize([0.0, 0.0])


def test_cosine_similarity_examples():
    """Checks identical, orthogonal and 45 degree pairs."""
    assert cosine_similarity([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1.0 / math.sqrt(2.0))


def test_cosine_similarity_shape_mismatch():
    """Vectors of different lengths cannot be compared."""
    with pytest.raises(ShapeMismatchError):
        cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(NumericalError):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_mlp_forward_examples():
    """Identity and constant single-layer networks."""
    identity = MlpParams([(np.eye(2), np.zeros(2))])
    output, _ = mlp_forward(identity, [1.0, -2.0])
    np.testing.assert_array_equal(output, [1.0, -2.0])

    constant = MlpParams([(np.zeros((1, 3)), np.array([5.0]))])
    output, _ = mlp_forward(constant, [0.3, -7.0, 2.0])
    np.testing.assert_array_equal(output, [5.0])


def test_mlp_forward_two_layers_by_hand():
    """Two-layer output recomputed with explicit loops."""
    params = MlpParams.initialize([3, 4, 2], np.random.default_rng(0), scale=1.0)
    x = [0.5, -1.0, 2.0]
    (w1, b1), (w2, b2) = params.layers
    hidden = [max(0.0, sum(w1[i, j] * x[j] for j in range(3)) + b1[i]) for i in range(4)]
    expected = [sum(w2[i, j] * hidden[j] for j in range(4)) + b2[i] for i in range(2)]
    output, _ = mlp_forward(params, x)
    np.testing.assert_allclose(output, expected, atol=1e-14)


def test_mlp_forward_rows_match_vectors(rng):
    """A matrix input gives the per-row outputs."""
    params = MlpParams.initialize([3, 5, 2], rng)
    rows = rng.normal(size=(4, 3))
    batched, _ = mlp_forward(params, rows)
    for row, output in zip(rows, batched):
        np.testing.assert_allclose(mlp_forward(params, row)[0], output, atol=1e-15)


def test_mlp_params_must_chain():
    """Consecutive layer widths must agree."""
    with pytest.raises(ShapeMismatchError):
        MlpParams([(np.zeros((3, 2)), np.zeros(3)), (np.zeros((2, 4)), np.zeros(2))])
    with pytest.raises(ShapeMismatchError):
        mlp_forward(MlpParams([(np.eye(2), np.zeros(2))]), [1.0, 2.0, 3.0])


def test_mlp_backward_examples():
    """Identity passes the gradient through and a zero layer blocks it."""
    identity = MlpParams([(np.eye(2), np.zeros(2))])
    _, tape = mlp_forward(identity, [1.0, -2.0])
    _, input_grad = mlp_backward(identity, tape, [0.3, 0.7])
    np.testing.assert_array_equal(input_grad, [0.3, 0.7])

    zero = MlpParams([(np.zeros((2, 2)), np.ones(2))])
    _, tape = mlp_forward(zero, [1.0, -2.0])
    _, input_grad = mlp_backward(zero, tape, [0.3, 0.7])
    np.testing.assert_array_equal(input_grad, [0.0, 0.0])


def test_mlp_backward_rejects_stale_tape(rng):
    """A tape recorded with other parameter shapes is refused."""
    small = MlpParams.initialize([2, 3, 2], rng)
    large = MlpParams.initialize([2, 4, 2], rng)
    _, tape = mlp_forward(small, [1.0, 1.0])
    with pytest.raises(ShapeMismatchError):
        mlp_backward(large, tape, [1.0, 1.0])
    with pytest.raises(ShapeMismatchError):
        mlp_backward(small, tape, [1.0, 1.0, 1.0])


@pytest.mark.parametrize("seed", range(20))
def test_mlp_backward_finite_differences(seed, numeric_gradient):
    """Parameter and input gradients agree with central differences."""
    rng = np.random.default_rng(seed)
    params = MlpParams.initialize([4, 5, 3], rng, scale=1.0)
    x = rng.normal(size=4)
    upstream = rng.normal(size=3)

    def objective():
        return float(mlp_forward(params, x)[0] @ upstream)

    _, tape = mlp_forward(params, x)
    grads, input_grad = mlp_backward(params, tape, upstream)
    for (weight, bias), (d_weight, d_bias) in zip(params.layers, grads):
        assert relative_error(d_weight, numeric_gradient(objective, weight)).max() < 1e-4
        assert relative_error(d_bias, numeric_gradient(objective, bias)).max() < 1e-4
    assert relative_error(input_grad, numeric_gradient(objective, x)).max() < 1e-4
