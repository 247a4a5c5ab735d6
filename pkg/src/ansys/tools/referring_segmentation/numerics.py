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
"""Provides the dense math shared by every learnable component.

All arrays are 64-bit floats. Functions accept one-dimensional vectors unless
stated otherwise; matrices hold one sample per row.
"""
from dataclasses import dataclass

from beartype.typing import List, Sequence, Tuple
import numpy as np

from ansys.tools.referring_segmentation.errors import NumericalError, ShapeMismatchError


def as_float_array(values, name: str = "array") -> np.ndarray:
    """Convert to a finite ``float64`` array.

    Parameters
    ----------
    values : array_like
        Values to convert.
    name : str, default: "array"
        Name used in error messages.

    Returns
    -------
    numpy.ndarray
        Finite ``float64`` array.

    Raises
    ------
    NumericalError
        If any entry is NaN or infinite.

    """
    array = np.asarray(values, dtype=np.float64)
    ensure_finite(array, name)
    return array


def ensure_finite(array: np.ndarray, name: str = "array") -> None:
    """Raise a ``NumericalError`` if ``array`` holds NaN or infinite entries."""
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"{name} contains non-finite entries.")


def softmax(logits) -> np.ndarray:
    """Normalized exponential with max-subtraction.

    Parameters
    ----------
    logits : array_like
        Non-empty finite vector.

    Returns
    -------
    numpy.ndarray
        Positive entries summing to one.

    Raises
    ------
    NumericalError
        If ``logits`` is empty or not finite.

    """
    logits = as_float_array(logits, "logits")
    if logits.size == 0:
        raise NumericalError("softmax of an empty vector is undefined.")
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of softmax along the last axis."""
    return probs * (upstream - np.sum(upstream * probs, axis=-1, keepdims=True))


def l2_normalize(vector) -> np.ndarray:
    """Scale a vector to unit Euclidean norm.

    Raises
    ------
    NumericalError
        If the vector has zero norm or non-finite entries.

    """
    vector = as_float_array(vector, "vector")
    norm = np.linalg.norm(vector)
    if norm == 0.0:
        raise NumericalError("Cannot normalize a zero vector.")
    return vector / norm


def l2_normalize_backward(vector: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of :func:`l2_normalize` at ``vector``."""
    norm = np.linalg.norm(vector)
    unit = vector / norm
    return (upstream - unit * np.dot(unit, upstream)) / norm


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two non-zero vectors of equal length.

    Raises
    ------
    ShapeMismatchError
        If the lengths differ.
    NumericalError
        If either vector is zero.

    """
    a = as_float_array(a, "a")
    b = as_float_array(b, "b")
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Cannot compare vectors of shapes {a.shape} and {b.shape}.")
    value = float(np.dot(l2_normalize(a), l2_normalize(b)))
    return min(1.0, max(-1.0, value))


def cosine_similarity_backward(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of ``cosine_similarity(a, b)`` with respect to ``a`` and ``b``."""
    unit_a, unit_b = l2_normalize(a), l2_normalize(b)
    return l2_normalize_backward(a, unit_b), l2_normalize_backward(b, unit_a)


def relu(x: np.ndarray) -> np.ndarray:
    """Rectified linear unit."""
    return np.maximum(x, 0.0)


@dataclass
class MlpParams:
    """Ordered ``(weight, bias)`` layers of a multi-layer perceptron.

    Weights have shape ``(out, in)``. Hidden layers use ReLU and the output layer
    is linear. The arrays are shared with the parameter store, so in-place
    optimizer updates are visible here.
    """

    layers: List[Tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        """Check that consecutive layer dimensions chain."""
        if not self.layers:
            raise ShapeMismatchError("An MLP needs at least one layer.")
        for index, (weight, bias) in enumerate(self.layers):
            if weight.ndim != 2 or bias.shape != (weight.shape[0],):
                raise ShapeMismatchError(f"Layer {index} has inconsistent weight/bias shapes.")
            if index and weight.shape[1] != self.layers[index - 1][0].shape[0]:
                raise ShapeMismatchError(
                    f"Layer {index} expects {weight.shape[1]} inputs but layer {index - 1} "
                    f"produces {self.layers[index - 1][0].shape[0]}."
                )

    @property
    def input_dim(self) -> int:
        """Width of the first layer input."""
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        """Width of the last layer output."""
        return self.layers[-1][0].shape[0]

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        """Shapes of every weight and bias, in layer order."""
        return tuple(shape for weight, bias in self.layers for shape in (weight.shape, bias.shape))

    @classmethod
    def initialize(
        cls, dims: Sequence[int], rng: np.random.Generator, scale: float = 0.1
    ) -> "MlpParams":
        """Uniform ``[-scale, scale]`` initialization for the layer widths ``dims``."""
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            layers.append(
                (rng.uniform(-scale, scale, (fan_out, fan_in)), rng.uniform(-scale, scale, fan_out))
            )
        return cls(layers)


@dataclass(frozen=True)
class MlpTape:
    """Forward cache of :func:`mlp_forward`.

    Holds the input and pre-activation of every layer and the shapes of the
    parameters it was recorded with.
    """

    inputs: Tuple[np.ndarray, ...]
    preactivations: Tuple[np.ndarray, ...]
    param_shapes: Tuple[Tuple[int, ...], ...]
    squeeze: bool


def mlp_forward(params: MlpParams, x) -> Tuple[np.ndarray, MlpTape]:
    """Run an MLP on one vector or on the rows of a matrix.

    Parameters
    ----------
    params : MlpParams
        Network weights.
    x : array_like
        Input vector of length ``params.input_dim`` or matrix with one input per row.

    Returns
    -------
    Tuple[numpy.ndarray, MlpTape]
        Output with the same leading shape as ``x`` and the cache for :func:`mlp_backward`.

    Raises
    ------
    ShapeMismatchError
        If the input width does not match the first layer.

    """
    x = as_float_array(x, "MLP input")
    squeeze = x.ndim == 1
    hidden = np.atleast_2d(x)
    if hidden.shape[1] != params.input_dim:
        raise ShapeMismatchError(
            f"MLP expects inputs of width {params.input_dim}, got {hidden.shape[1]}."
        )
    inputs, preactivations = [], []
    last = len(params.layers) - 1
    for index, (weight, bias) in enumerate(params.layers):
        inputs.append(hidden)
        pre = hidden @ weight.T + bias
        preactivations.append(pre)
        hidden = pre if index == last else relu(pre)
    ensure_finite(hidden, "MLP output")
    tape = MlpTape(tuple(inputs), tuple(preactivations), params.shapes, squeeze)
    return (hidden[0] if squeeze else hidden), tape


def mlp_backward(
    params: MlpParams, tape: MlpTape, upstream
) -> Tuple[List[Tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Reverse pass of :func:`mlp_forward`.

    Parameters
    ----------
    params : MlpParams
        The weights used for the forward call.
    tape : MlpTape
        Cache returned by the forward call.
    upstream : array_like
        Gradient of the objective with respect to the MLP output.

    Returns
    -------
    Tuple[List[Tuple[numpy.ndarray, numpy.ndarray]], numpy.ndarray]
        Per-layer ``(weight, bias)`` gradients and the gradient with respect to the input.

    Raises
    ------
    ShapeMismatchError
        If the tape was recorded with differently shaped parameters or the
        upstream gradient does not match the recorded output.

    """
    if tape.param_shapes != params.shapes:
        raise ShapeMismatchError("The MLP tape was recorded with different parameters.")
    grad = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if grad.shape != tape.preactivations[-1].shape:
        raise ShapeMismatchError(
            f"Upstream gradient of shape {grad.shape} does not match the MLP output "
            f"{tape.preactivations[-1].shape}."
        )
    grads = [None] * len(params.layers)
    last = len(params.layers) - 1
    for index in range(last, -1, -1):
        weight, _ = params.layers[index]
        if index != last:
            grad = grad * (tape.preactivations[index] > 0.0)
        grads[index] = (grad.T @ tape.inputs[index], grad.sum(axis=0))
        grad = grad @ weight
    return grads, (grad[0] if tape.squeeze else grad)
