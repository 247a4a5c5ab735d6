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
"""Provides the per-object embeddings of a frame.

The pipeline is backbone features, masked max-pooling, positional injection
and the text-guided relation attention. Every forward function returns the
cache its backward counterpart needs.
"""
from dataclasses import dataclass
import math

from beartype.typing import Dict, Optional, Tuple
import numpy as np

from ansys.tools.referring_segmentation.errors import EmptyMaskError, ShapeMismatchError
from ansys.tools.referring_segmentation.language import (
    PoolParams,
    PoolTape,
    pool_backward,
    self_guided_pool,
)
from ansys.tools.referring_segmentation.masks import BinaryMask, PositionalDescriptor
from ansys.tools.referring_segmentation.numerics import (
    MlpParams,
    MlpTape,
    as_float_array,
    cosine_similarity,
    mlp_backward,
    mlp_forward,
    relu,
    softmax_backward,
)

RGB_CHANNELS = 3


def coordinate_grid(width: int, height: int) -> np.ndarray:
    """``(height, width, 2)`` array of ``x / (width - 1)`` and ``y / (height - 1)``."""
    xs = np.arange(width) / max(width - 1, 1)
    ys = np.arange(height) / max(height - 1, 1)
    grid_x, grid_y = np.meshgrid(xs, ys)
    return np.stack([grid_x, grid_y], axis=-1)


class Frame:
    """One video frame as per-pixel input channels in ``[0, 1]``.

    Generated scenes use five channels: red, green, blue and the normalized
    ``x`` and ``y`` pixel coordinates.

    Parameters
    ----------
    channels : numpy.ndarray
        ``(height, width, channels)`` array.

    """

    def __init__(self, channels: np.ndarray) -> None:
        """Initialize and validate the raster."""
        channels = np.asarray(channels)
        if channels.ndim != 3:
            raise ShapeMismatchError(
                f"Frame must be (height, width, channels), got {channels.shape}."
            )
        if channels.size and (channels.min() < 0.0 or channels.max() > 1.0):
            raise ShapeMismatchError("Frame channel values must lie in [0, 1].")
        self._channels = np.array(channels)
        self._channels.setflags(write=False)

    @classmethod
    def from_rgb(cls, rgb: np.ndarray, dtype=np.float32) -> "Frame":
        """Frame made of an RGB image and the coordinate channels."""
        height, width = rgb.shape[:2]
        return cls(np.concatenate([rgb, coordinate_grid(width, height)], axis=-1).astype(dtype))

    @property
    def channels(self) -> np.ndarray:
        """Read-only ``(height, width, channels)`` raster."""
        return self._channels

    @property
    def width(self) -> int:
        """Width in pixels."""
        return self._channels.shape[1]

    @property
    def height(self) -> int:
        """Height in pixels."""
        return self._channels.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        """The color channels."""
        return self._channels[..., :RGB_CHANNELS]

    def horizontal_flip(self) -> "Frame":
        """Mirror the color channels. Other channels describe the pixel grid and stay."""
        channels = np.array(self._channels)
        channels[..., :RGB_CHANNELS] = self._channels[:, ::-1, :RGB_CHANNELS]
        return Frame(channels)

    def __eq__(self, other: object) -> bool:
        """Exact raster equality."""
        if not isinstance(other, Frame):
            return NotImplemented
        return self._channels.shape == other._channels.shape and np.array_equal(
            self._channels, other._channels
        )


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel features of a frame, stored as ``(height * width, dim)`` rows."""

    width: int
    height: int
    features: np.ndarray

    @property
    def dim(self) -> int:
        """Feature width."""
        return self.features.shape[1]

    def at(self, x: int, y: int) -> np.ndarray:
        """Feature vector of pixel ``(x, y)``."""
        return self.features[y * self.width + x]


@dataclass(frozen=True)
class BackboneTape:
    """Forward cache of :func:`backbone_features`."""

    inputs: np.ndarray
    preactivations: np.ndarray


def backbone_features(
    frame: Frame, weight: np.ndarray, bias: np.ndarray
) -> Tuple[FeatureMap, BackboneTape]:
    """Per-pixel linear map followed by ReLU.

    Parameters
    ----------
    frame : Frame
        Input frame.
    weight : numpy.ndarray
        ``(feature_dim, channels)`` matrix.
    bias : numpy.ndarray
        ``(feature_dim,)`` vector.

    """
    if weight.shape[1] != frame.channels.shape[2]:
        raise ShapeMismatchError(
            f"Backbone expects {weight.shape[1]} channels, frame has {frame.channels.shape[2]}."
        )
    inputs = frame.channels.reshape(-1, frame.channels.shape[2]).astype(np.float64)
    pre = inputs @ weight.T + bias
    return FeatureMap(frame.width, frame.height, relu(pre)), BackboneTape(inputs, pre)


def backbone_backward(tape: BackboneTape, d_features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of the backbone weight and bias."""
    d_pre = d_features * (tape.preactivations > 0.0)
    return d_pre.T @ tape.inputs, d_pre.sum(axis=0)


@dataclass(frozen=True)
class MaxPoolTape:
    """Forward cache of :func:`masked_maxpool_embed`."""

    pixels: np.ndarray
    mlp_tape: MlpTape


def masked_maxpool_embed(
    feature_map: FeatureMap, mask: BinaryMask, mlp: MlpParams
) -> Tuple[np.ndarray, MaxPoolTape]:
    """Channel-wise maximum of the features under a mask, followed by an MLP.

    Returns
    -------
    Tuple[numpy.ndarray, MaxPoolTape]
        Individual object embedding and the cache. ``tape.pixels`` holds the
        flat index of the first maximizing pixel of every channel.

    Raises
    ------
    EmptyMaskError
        If the mask has no foreground pixel.

    """
    if (mask.width, mask.height) != (feature_map.width, feature_map.height):
        raise ShapeMismatchError("Mask and feature map sizes differ.")
    inside = np.flatnonzero(mask.bitmap.ravel())
    if inside.size == 0:
        raise EmptyMaskError("Cannot pool features under an empty mask.")
    local = feature_map.features[inside]
    argmax = np.argmax(local, axis=0)
    pooled = local[argmax, np.arange(local.shape[1])]
    embedding, mlp_tape = mlp_forward(mlp, pooled)
    return embedding, MaxPoolTape(inside[argmax], mlp_tape)


def masked_maxpool_backward(
    mlp: MlpParams, tape: MaxPoolTape, upstream: np.ndarray, d_features: np.ndarray
) -> list:
    """Reverse pass of :func:`masked_maxpool_embed`.

    The pooled gradient is added in place to ``d_features`` at the maximizing
    pixels. Returns the MLP gradients.
    """
    mlp_grads, d_pooled = mlp_backward(mlp, tape.mlp_tape, upstream)
    d_features[tape.pixels, np.arange(d_pooled.size)] += d_pooled
    return mlp_grads


def apply_prm(embedding: np.ndarray, descriptor, positional_weight: np.ndarray) -> np.ndarray:
    """Add the projected positional descriptor to an object embedding.

    Parameters
    ----------
    embedding : numpy.ndarray
        Individual object embedding.
    descriptor : PositionalDescriptor or numpy.ndarray
        Ten-value descriptor.
    positional_weight : numpy.ndarray
        ``(embedding_dim, 10)`` projection.

    """
    p = descriptor.as_array() if isinstance(descriptor, PositionalDescriptor) else descriptor
    p = as_float_array(p, "descriptor")
    if positional_weight.shape != (embedding.shape[0], p.shape[0]):
        raise ShapeMismatchError(
            f"Positional projection of shape {positional_weight.shape} does not map "
            f"{p.shape[0]} values to {embedding.shape[0]}."
        )
    return embedding + positional_weight @ p


@dataclass
class TsrmParams:
    """Weights of the text-guided relation attention.

    ``query``, ``key`` have ``key_dim`` rows; ``fusion`` maps the concatenated
    object and sentence features back to the embedding width.
    """

    guidance: PoolParams
    fusion: np.ndarray
    query: np.ndarray
    key: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        """Check the projection shapes."""
        if self.query.shape[0] != self.key.shape[0]:
            raise ShapeMismatchError("Query and key projections must share their output width.")

    @property
    def key_dim(self) -> int:
        """Width of queries and keys."""
        return self.query.shape[0]


@dataclass(frozen=True)
class TsrmTape:
    """Forward cache of :func:`tsrm`."""

    objects: np.ndarray
    concat: Optional[np.ndarray]
    fused: np.ndarray
    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    attention: np.ndarray
    guidance_tape: Optional[PoolTape]


def tsrm(
    objects: np.ndarray,
    hiddens: Optional[np.ndarray],
    params: TsrmParams,
    text_guided: bool = True,
) -> Tuple[np.ndarray, TsrmTape]:
    """Relation attention among the objects of one frame.

    With text guidance each object feature is concatenated with a sentence
    feature pooled from ``hiddens`` and projected by ``params.fusion``; keys
    and values come from that fused feature. Without it, keys and values come
    from the object features directly. Queries always come from the object
    features and the output keeps a residual connection to them.

    Parameters
    ----------
    objects : numpy.ndarray
        ``(N, dim)`` position-enhanced object features.
    hiddens : numpy.ndarray or None
        Sentence hidden states, required when ``text_guided``.
    params : TsrmParams
        Attention weights.
    text_guided : bool, default: True
        Whether the keys and values see the sentence.

    Returns
    -------
    Tuple[numpy.ndarray, TsrmTape]
        ``(N, dim)`` relation-enhanced features and the cache. ``tape.attention``
        is the row-stochastic ``(N, N)`` attention matrix.

    """
    objects = as_float_array(objects, "object features")
    if objects.ndim != 2 or objects.shape[0] < 1:
        raise ShapeMismatchError("Relation attention needs at least one object.")
    concat = guidance_tape = None
    if text_guided:
        sentence, guidance_tape = self_guided_pool(params.guidance, hiddens)
        concat = np.concatenate([objects, np.broadcast_to(sentence, objects.shape)], axis=1)
        fused = concat @ params.fusion.T
    else:
        fused = objects
    queries = objects @ params.query.T
    keys = fused @ params.key.T
    values = fused @ params.value.T
    logits = queries @ keys.T / math.sqrt(params.key_dim)
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    attention = shifted / shifted.sum(axis=1, keepdims=True)
    output = objects + attention @ values
    return output, TsrmTape(objects, concat, fused, queries, keys, values, attention, guidance_tape)


def tsrm_backward(
    params: TsrmParams, tape: TsrmTape, upstream: np.ndarray
) -> Tuple[Dict[str, object], np.ndarray, Optional[np.ndarray]]:
    """Reverse pass of :func:`tsrm`.

    Returns
    -------
    Tuple[Dict[str, object], numpy.ndarray, numpy.ndarray or None]
        Parameter gradients, the object-feature gradient and the hidden-state
        gradient (``None`` without text guidance).

    """
    scale = 1.0 / math.sqrt(params.key_dim)
    d_objects = np.array(upstream, dtype=np.float64)
    d_attention = upstream @ tape.values.T
    d_values = tape.attention.T @ upstream
    d_logits = softmax_backward(tape.attention, d_attention) * scale
    d_queries = d_logits @ tape.keys
    d_keys = d_logits.T @ tape.queries
    grads = {
        "query": d_queries.T @ tape.objects,
        "key": d_keys.T @ tape.fused,
        "value": d_values.T @ tape.fused,
    }
    d_objects += d_queries @ params.query
    d_fused = d_keys @ params.key + d_values @ params.value
    d_hiddens = None
    if tape.concat is not None:
        dim = tape.objects.shape[1]
        grads["fusion"] = d_fused.T @ tape.concat
        d_concat = d_fused @ params.fusion
        d_objects += d_concat[:, :dim]
        guidance_grads, d_hiddens = pool_backward(
            params.guidance, tape.guidance_tape, d_concat[:, dim:].sum(axis=0)
        )
        grads["guidance"] = guidance_grads
    else:
        d_objects += d_fused
    return grads, d_objects, d_hiddens


def match_score(relation_embedding: np.ndarray, sentence_embedding: np.ndarray) -> float:
    """Cosine similarity between an object embedding and the sentence embedding."""
    return cosine_similarity(relation_embedding, sentence_embedding)


@dataclass
class ObjectCandidate:
    """One candidate object of a frame and its embeddings in pipeline order.

    Attributes
    ----------
    mask : BinaryMask
        Candidate segmentation.
    descriptor : PositionalDescriptor
        Box geometry and rank indices.
    embedding : numpy.ndarray, optional
        Individual embedding from masked max-pooling.
    spatial : numpy.ndarray, optional
        Position-enhanced embedding.
    relation : numpy.ndarray, optional
        Relation-enhanced embedding used for retrieval and association.

    """

    mask: BinaryMask
    descriptor: PositionalDescriptor
    embedding: Optional[np.ndarray] = None
    spatial: Optional[np.ndarray] = None
    relation: Optional[np.ndarray] = None
