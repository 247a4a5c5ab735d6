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
"""Provides the parameter store and the differentiable per-frame model."""
from collections import OrderedDict
from dataclasses import dataclass

from beartype.typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union
import numpy as np

from ansys.tools.referring_segmentation.embedding import (
    BackboneTape,
    Frame,
    MaxPoolTape,
    ObjectCandidate,
    TsrmParams,
    TsrmTape,
    apply_prm,
    backbone_backward,
    backbone_features,
    masked_maxpool_backward,
    masked_maxpool_embed,
    tsrm,
    tsrm_backward,
)
from ansys.tools.referring_segmentation.errors import ShapeMismatchError
from ansys.tools.referring_segmentation.language import (
    EncoderParams,
    EncoderTape,
    PoolParams,
    PoolTape,
    TokenSequence,
    Vocabulary,
    encode_backward,
    encode_sequence,
    pool_backward,
    self_guided_pool,
    tokenize,
)
from ansys.tools.referring_segmentation.masks import (
    DESCRIPTOR_DIM,
    BinaryMask,
    PositionalDescriptor,
    positional_descriptors,
)
from ansys.tools.referring_segmentation.numerics import MlpParams
from ansys.tools.referring_segmentation.utils.config import EncoderConfig, ModelConfig

_DESCRIPTOR_SELECTION = {
    "full": np.ones(DESCRIPTOR_DIM),
    "absolute": np.r_[np.ones(8), np.zeros(2)],
    "relative": np.r_[np.zeros(8), np.ones(2)],
}


def _mlp_dims(input_dim: int, output_dim: int, layers: int) -> List[int]:
    return [input_dim] + [output_dim] * layers


class ParameterStore:
    """Every trainable dense array of the model, by name.

    Structured views (:class:`MlpParams`, :class:`EncoderParams`, ...) share
    memory with the store, so in-place updates reach every view.

    Parameters
    ----------
    arrays : Dict[str, numpy.ndarray]
        Named ``float64`` arrays.

    """

    def __init__(self, arrays: Dict[str, np.ndarray]) -> None:
        """Initialize the store."""
        self._arrays = OrderedDict(
            (name, np.ascontiguousarray(array, dtype=np.float64)) for name, array in arrays.items()
        )

    @classmethod
    def initialize(
        cls,
        model_config: ModelConfig,
        encoder_config: EncoderConfig,
        vocab_size: int,
        rng: np.random.Generator,
        scale: float = 0.1,
    ) -> "ParameterStore":
        """Uniform ``[-scale, scale]`` initialization of every parameter."""
        dim = model_config.embedding_dim
        hidden = encoder_config.hidden_dim
        shapes = OrderedDict()
        shapes["backbone.weight"] = (model_config.feature_dim, model_config.input_channels)
        shapes["backbone.bias"] = (model_config.feature_dim,)
        _add_mlp_shapes(
            shapes, "object_mlp", _mlp_dims(model_config.feature_dim, dim, model_config.mlp_layers)
        )
        shapes["positional.weight"] = (dim, DESCRIPTOR_DIM)
        shapes["encoder.embedding"] = (vocab_size, encoder_config.embedding_dim)
        for direction in ("fwd", "bwd"):
            shapes[f"encoder.{direction}_input"] = (hidden, encoder_config.embedding_dim)
            shapes[f"encoder.{direction}_hidden"] = (hidden, hidden)
            shapes[f"encoder.{direction}_bias"] = (hidden,)
        for prefix in ("sentence_pool", "tsrm.guidance"):
            shapes[f"{prefix}.scorer_weight"] = (2 * hidden,)
            shapes[f"{prefix}.scorer_bias"] = (1,)
            _add_mlp_shapes(
                shapes, f"{prefix}.mlp", _mlp_dims(2 * hidden, dim, model_config.mlp_layers)
            )
        shapes["tsrm.fusion"] = (dim, 2 * dim)
        for name in ("query", "key", "value"):
            shapes[f"tsrm.{name}"] = (dim, dim)
        return cls({name: rng.uniform(-scale, scale, shape) for name, shape in shapes.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        """Array called ``name``."""
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        """Whether a parameter called ``name`` exists."""
        return name in self._arrays

    def __iter__(self) -> Iterator[str]:
        """Parameter names in creation order."""
        return iter(self._arrays)

    def __len__(self) -> int:
        """Number of named arrays."""
        return len(self._arrays)

    def items(self):
        """``(name, array)`` pairs."""
        return self._arrays.items()

    @property
    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(array.size for array in self._arrays.values())

    def zeros_like(self) -> Dict[str, np.ndarray]:
        """Zero gradient slots for every parameter."""
        return OrderedDict((name, np.zeros_like(array)) for name, array in self._arrays.items())

    def copy(self) -> "ParameterStore":
        """Deep copy."""
        return ParameterStore({name: array.copy() for name, array in self._arrays.items()})

    def mlp(self, prefix: str) -> MlpParams:
        """View of the MLP stored under ``prefix``."""
        layers = []
        index = 0
        while f"{prefix}.{index}.weight" in self._arrays:
            layers.append((self[f"{prefix}.{index}.weight"], self[f"{prefix}.{index}.bias"]))
            index += 1
        return MlpParams(layers)

    def pool(self, prefix: str) -> PoolParams:
        """View of the self-guided pooling stored under ``prefix``."""
        return PoolParams(
            self[f"{prefix}.scorer_weight"],
            self[f"{prefix}.scorer_bias"],
            self.mlp(f"{prefix}.mlp"),
        )

    def encoder(self) -> EncoderParams:
        """View of the sentence encoder and its pooling."""
        return EncoderParams(
            embedding=self["encoder.embedding"],
            fwd_input=self["encoder.fwd_input"],
            fwd_hidden=self["encoder.fwd_hidden"],
            fwd_bias=self["encoder.fwd_bias"],
            bwd_input=self["encoder.bwd_input"],
            bwd_hidden=self["encoder.bwd_hidden"],
            bwd_bias=self["encoder.bwd_bias"],
            pool=self.pool("sentence_pool"),
        )

    def tsrm(self) -> TsrmParams:
        """View of the relation attention."""
        return TsrmParams(
            guidance=self.pool("tsrm.guidance"),
            fusion=self["tsrm.fusion"],
            query=self["tsrm.query"],
            key=self["tsrm.key"],
            value=self["tsrm.value"],
        )


def _add_mlp_shapes(shapes: Dict[str, Tuple[int, ...]], prefix: str, dims: Sequence[int]) -> None:
    for index, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        shapes[f"{prefix}.{index}.weight"] = (fan_out, fan_in)
        shapes[f"{prefix}.{index}.bias"] = (fan_out,)


def add_mlp_grads(grads: Dict[str, np.ndarray], prefix: str, mlp_grads) -> None:
    """Accumulate per-layer MLP gradients into named slots."""
    for index, (d_weight, d_bias) in enumerate(mlp_grads):
        grads[f"{prefix}.{index}.weight"] += d_weight
        grads[f"{prefix}.{index}.bias"] += d_bias


def add_pool_grads(grads: Dict[str, np.ndarray], prefix: str, pool_grads) -> None:
    """Accumulate self-guided pooling gradients into named slots."""
    grads[f"{prefix}.scorer_weight"] += pool_grads["scorer_weight"]
    grads[f"{prefix}.scorer_bias"] += pool_grads["scorer_bias"]
    add_mlp_grads(grads, f"{prefix}.mlp", pool_grads["mlp"])


@dataclass(frozen=True)
class QueryEncoding:
    """Sentence hidden states and sentence embedding with their caches."""

    tokens: TokenSequence
    hiddens: np.ndarray
    sentence: np.ndarray
    encoder_tape: EncoderTape
    pool_tape: PoolTape


@dataclass(frozen=True)
class FrameForward:
    """All the intermediate values of one frame forward pass."""

    masks: Tuple[BinaryMask, ...]
    descriptors: Tuple[PositionalDescriptor, ...]
    backbone_tape: BackboneTape
    pool_tapes: Tuple[MaxPoolTape, ...]
    injected: np.ndarray
    embeddings: np.ndarray
    spatial: np.ndarray
    relation: np.ndarray
    tsrm_tape: Optional[TsrmTape]

    @property
    def candidates(self) -> List[ObjectCandidate]:
        """The candidates with their embeddings filled in."""
        return [
            ObjectCandidate(mask, descriptor, self.embeddings[i], self.spatial[i], self.relation[i])
            for i, (mask, descriptor) in enumerate(zip(self.masks, self.descriptors))
        ]

    @property
    def attention(self) -> Optional[np.ndarray]:
        """Relation attention matrix, if the relation module ran."""
        return None if self.tsrm_tape is None else self.tsrm_tape.attention


class ReferringModel:
    """Object embedding and sentence embedding of the retrieval model.

    Parameters
    ----------
    params : ParameterStore
        Trainable weights.
    vocab : Vocabulary
        Word ids of the sentence encoder.
    model_config : ModelConfig
        Dimensions and ablation switches.
    encoder_config : EncoderConfig
        Sentence encoder settings.

    """

    def __init__(
        self,
        params: ParameterStore,
        vocab: Vocabulary,
        model_config: ModelConfig,
        encoder_config: EncoderConfig,
    ) -> None:
        """Initialize the model views."""
        self._params = params
        self._vocab = vocab
        self._model_config = model_config
        self._encoder_config = encoder_config

    @property
    def params(self) -> ParameterStore:
        """Trainable weights."""
        return self._params

    @property
    def vocab(self) -> Vocabulary:
        """Sentence vocabulary."""
        return self._vocab

    @property
    def model_config(self) -> ModelConfig:
        """Dimensions and ablation switches."""
        return self._model_config

    @property
    def encoder_config(self) -> EncoderConfig:
        """Sentence encoder settings."""
        return self._encoder_config

    def tokenize(self, text: str) -> TokenSequence:
        """Tokenize ``text`` with the model vocabulary."""
        return tokenize(text, self._vocab, self._encoder_config.max_length)

    def encode_query(self, query: Union[str, TokenSequence]) -> QueryEncoding:
        """Hidden states and pooled sentence embedding of a query."""
        tokens = self.tokenize(query) if isinstance(query, str) else query
        encoder = self._params.encoder()
        hiddens, encoder_tape = encode_sequence(encoder, tokens)
        sentence, pool_tape = self_guided_pool(encoder.pool, hiddens)
        return QueryEncoding(tokens, hiddens, sentence, encoder_tape, pool_tape)

    def backward_query(
        self,
        query: QueryEncoding,
        d_sentence: np.ndarray,
        d_hiddens: np.ndarray,
        grads: Dict[str, np.ndarray],
    ) -> None:
        """Accumulate the sentence-side gradients into ``grads``."""
        encoder = self._params.encoder()
        pool_grads, d_pooled_hiddens = pool_backward(encoder.pool, query.pool_tape, d_sentence)
        add_pool_grads(grads, "sentence_pool", pool_grads)
        encoder_grads = encode_backward(encoder, query.encoder_tape, d_hiddens + d_pooled_hiddens)
        for name, value in encoder_grads.items():
            grads[f"encoder.{name}"] += value

    def embed_frame(
        self, frame: Frame, masks: Sequence[BinaryMask], query: QueryEncoding
    ) -> FrameForward:
        """Relation-enhanced embeddings of the candidates of one frame.

        Raises
        ------
        EmptyMaskError
            If there is no candidate or a candidate mask is empty.

        """
        masks = tuple(masks)
        descriptors = tuple(positional_descriptors(masks))
        for mask in masks:
            if (mask.width, mask.height) != (frame.width, frame.height):
                raise ShapeMismatchError("Candidate masks must match the frame size.")
        feature_map, backbone_tape = backbone_features(
            frame, self._params["backbone.weight"], self._params["backbone.bias"]
        )
        object_mlp = self._params.mlp("object_mlp")
        pooled = [masked_maxpool_embed(feature_map, mask, object_mlp) for mask in masks]
        embeddings = np.stack([embedding for embedding, _ in pooled])

        encoding = self._model_config.positional_encoding
        if encoding == "none":
            injected = np.zeros((len(masks), DESCRIPTOR_DIM))
            spatial = embeddings.copy()
        else:
            raw = np.stack([d.as_array() for d in descriptors])
            injected = raw * _DESCRIPTOR_SELECTION[encoding]
            weight = self._params["positional.weight"]
            spatial = np.stack(
                [apply_prm(embedding, p, weight) for embedding, p in zip(embeddings, injected)]
            )

        tsrm_tape = None
        if self._model_config.relation == "none":
            relation = spatial.copy()
        else:
            relation, tsrm_tape = tsrm(
                spatial,
                query.hiddens,
                self._params.tsrm(),
                text_guided=self._model_config.relation == "text_guided",
            )
        return FrameForward(
            masks=masks,
            descriptors=descriptors,
            backbone_tape=backbone_tape,
            pool_tapes=tuple(tape for _, tape in pooled),
            injected=injected,
            embeddings=embeddings,
            spatial=spatial,
            relation=relation,
            tsrm_tape=tsrm_tape,
        )

    def backward_frame(
        self, forward: FrameForward, d_relation: np.ndarray, grads: Dict[str, np.ndarray]
    ) -> Optional[np.ndarray]:
        """Accumulate the frame-side gradients into ``grads``.

        Returns
        -------
        numpy.ndarray or None
            Gradient with respect to the sentence hidden states, ``None`` when
            the relation module does not read the sentence.

        """
        d_hiddens = None
        if forward.tsrm_tape is None:
            d_spatial = d_relation
        else:
            tsrm_grads, d_spatial, d_tsrm_hiddens = tsrm_backward(
                self._params.tsrm(), forward.tsrm_tape, d_relation
            )
            for name in ("query", "key", "value", "fusion"):
                if name in tsrm_grads:
                    grads[f"tsrm.{name}"] += tsrm_grads[name]
            if d_tsrm_hiddens is not None:
                add_pool_grads(grads, "tsrm.guidance", tsrm_grads["guidance"])
                d_hiddens = d_tsrm_hiddens

        if self._model_config.positional_encoding != "none":
            grads["positional.weight"] += d_spatial.T @ forward.injected

        object_mlp = self._params.mlp("object_mlp")
        d_features = np.zeros_like(forward.backbone_tape.preactivations)
        for index, tape in enumerate(forward.pool_tapes):
            mlp_grads = masked_maxpool_backward(object_mlp, tape, d_spatial[index], d_features)
            add_mlp_grads(grads, "object_mlp", mlp_grads)
        d_weight, d_bias = backbone_backward(forward.backbone_tape, d_features)
        grads["backbone.weight"] += d_weight
        grads["backbone.bias"] += d_bias
        return d_hiddens
