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
"""Provides tokenization, the bidirectional sentence encoder and self-guided pooling."""
from dataclasses import dataclass
import re

from beartype.typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
import numpy as np

from ansys.tools.referring_segmentation.errors import (
    DatasetFormatError,
    NumericalError,
    ShapeMismatchError,
)
from ansys.tools.referring_segmentation.numerics import (
    MlpParams,
    MlpTape,
    mlp_backward,
    mlp_forward,
    softmax,
    softmax_backward,
)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
MAX_LENGTH = 20
DEFAULT_SWAP_TABLE = {"left": "right", "right": "left"}

_WORD = re.compile(r"[^\W_]+")


def split_words(text: str) -> List[str]:
    """Lowercase a sentence and split it into runs of Unicode letters and digits."""
    return _WORD.findall(text.lower())


class Vocabulary:
    """Dense token-to-id map with reserved padding and unknown ids.

    Parameters
    ----------
    tokens : Sequence[str]
        Regular tokens, in id order. Ids 0 and 1 are reserved for
        ``PAD_TOKEN`` and ``UNK_TOKEN``.

    """

    def __init__(self, tokens: Sequence[str] = ()) -> None:
        """Initialize the id maps."""
        self._tokens = [PAD_TOKEN, UNK_TOKEN]
        for token in tokens:
            if token not in self._tokens:
                self._tokens.append(token)
        self._ids = {token: index for index, token in enumerate(self._tokens)}

    @classmethod
    def build(cls, texts: Iterable[str]) -> "Vocabulary":
        """Vocabulary of every word of ``texts``, sorted for stable ids."""
        words = set()
        for text in texts:
            words.update(split_words(text))
        return cls(sorted(words))

    @property
    def tokens(self) -> Tuple[str, ...]:
        """All tokens in id order, reserved ones included."""
        return tuple(self._tokens)

    def id_of(self, token: str) -> int:
        """Id of ``token``, or the unknown id."""
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        """Token with id ``token_id``."""
        return self._tokens[token_id]

    def __len__(self) -> int:
        """Number of ids."""
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        """Whether ``token`` has its own id."""
        return token in self._ids

    def __eq__(self, other: object) -> bool:
        """Same tokens with the same ids."""
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._tokens == other._tokens

    def to_dict(self) -> Dict[str, List[str]]:
        """JSON-ready representation."""
        return {"tokens": list(self._tokens)}

    @classmethod
    def from_dict(cls, values: Mapping[str, List[str]]) -> "Vocabulary":
        """Inverse of :meth:`to_dict`."""
        tokens = list(values.get("tokens", []))
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise DatasetFormatError(
                "Serialized vocabulary does not start with the reserved tokens."
            )
        return cls(tokens[2:])


@dataclass(frozen=True)
class TokenSequence:
    """Token ids padded to a fixed length.

    Attributes
    ----------
    ids : Tuple[int, ...]
        Padded ids. Positions at or after ``length`` hold ``PAD_ID``.
    length : int
        Number of real tokens, at least one.

    """

    ids: Tuple[int, ...]
    length: int

    def __post_init__(self):
        """Check the padding invariant."""
        if not 1 <= self.length <= len(self.ids):
            raise ShapeMismatchError(f"Invalid sequence length {self.length}.")
        if any(token != PAD_ID for token in self.ids[self.length :]):
            raise ShapeMismatchError("Positions after the sequence length must be padding.")

    @property
    def tokens(self) -> Tuple[int, ...]:
        """The real token ids, without padding."""
        return self.ids[: self.length]


def tokenize(text: str, vocab: Vocabulary, max_length: int = MAX_LENGTH) -> TokenSequence:
    """Tokenize, truncate and pad a sentence.

    Raises
    ------
    NumericalError
        If the text has no word.

    """
    words = split_words(text)
    if not words:
        raise NumericalError(f"Cannot tokenize empty text {text!r}.")
    ids = [vocab.id_of(word) for word in words[:max_length]]
    return TokenSequence(tuple(ids) + (PAD_ID,) * (max_length - len(ids)), len(ids))


def swap_direction_tokens(
    sequence: TokenSequence, vocab: Vocabulary, swap_table: Optional[Mapping[str, str]] = None
) -> TokenSequence:
    """Exchange direction words, ``left`` and ``right`` by default, at the id level."""
    swap_table = DEFAULT_SWAP_TABLE if swap_table is None else swap_table
    id_swaps = {
        vocab.id_of(word): vocab.id_of(other)
        for word, other in swap_table.items()
        if word in vocab and other in vocab
    }
    ids = tuple(id_swaps.get(token, token) for token in sequence.ids)
    return TokenSequence(ids, sequence.length)


@dataclass
class PoolParams:
    """Self-guided attention pooling: a linear scorer and an MLP."""

    scorer_weight: np.ndarray
    scorer_bias: np.ndarray
    mlp: MlpParams


@dataclass
class EncoderParams:
    """Word embeddings, one Elman cell per direction and the sentence pooling."""

    embedding: np.ndarray
    fwd_input: np.ndarray
    fwd_hidden: np.ndarray
    fwd_bias: np.ndarray
    bwd_input: np.ndarray
    bwd_hidden: np.ndarray
    bwd_bias: np.ndarray
    pool: PoolParams

    @property
    def hidden_dim(self) -> int:
        """Width of a concatenated hidden state."""
        return 2 * self.fwd_hidden.shape[0]


@dataclass(frozen=True)
class EncoderTape:
    """Forward cache of :func:`encode_sequence`."""

    token_ids: np.ndarray
    inputs: np.ndarray
    fwd_states: np.ndarray
    bwd_states: np.ndarray


def _run_direction(inputs, input_weight, hidden_weight, bias) -> np.ndarray:
    states = np.zeros((inputs.shape[0], hidden_weight.shape[0]))
    previous = np.zeros(hidden_weight.shape[0])
    for step in range(inputs.shape[0]):
        previous = np.tanh(input_weight @ inputs[step] + hidden_weight @ previous + bias)
        states[step] = previous
    return states


def _run_direction_backward(inputs, states, input_weight, hidden_weight, d_states):
    d_input_weight = np.zeros_like(input_weight)
    d_hidden_weight = np.zeros_like(hidden_weight)
    d_bias = np.zeros(hidden_weight.shape[0])
    d_inputs = np.zeros_like(inputs)
    carry = np.zeros(hidden_weight.shape[0])
    for step in range(inputs.shape[0] - 1, -1, -1):
        d_pre = (d_states[step] + carry) * (1.0 - states[step] ** 2)
        previous = states[step - 1] if step else np.zeros(hidden_weight.shape[0])
        d_input_weight += np.outer(d_pre, inputs[step])
        d_hidden_weight += np.outer(d_pre, previous)
        d_bias += d_pre
        d_inputs[step] = input_weight.T @ d_pre
        carry = hidden_weight.T @ d_pre
    return d_input_weight, d_hidden_weight, d_bias, d_inputs


def encode_sequence(
    params: EncoderParams, sequence: TokenSequence
) -> Tuple[np.ndarray, EncoderTape]:
    """Hidden states of the real tokens of a sentence.

    Each state concatenates the forward and backward recurrences at its position.
    Padding never enters the recurrence.

    Returns
    -------
    Tuple[numpy.ndarray, EncoderTape]
        ``(length, 2 * hidden)`` states and the reverse-pass cache.

    """
    token_ids = np.asarray(sequence.tokens, dtype=np.int64)
    if np.any(token_ids >= params.embedding.shape[0]):
        raise ShapeMismatchError("Token id outside of the embedding table.")
    inputs = params.embedding[token_ids]
    fwd_states = _run_direction(inputs, params.fwd_input, params.fwd_hidden, params.fwd_bias)
    bwd_states = _run_direction(
        inputs[::-1], params.bwd_input, params.bwd_hidden, params.bwd_bias
    )[::-1]
    hiddens = np.concatenate([fwd_states, bwd_states], axis=1)
    return hiddens, EncoderTape(token_ids, inputs, fwd_states, bwd_states)


def encode_backward(
    params: EncoderParams, tape: EncoderTape, d_hiddens: np.ndarray
) -> Dict[str, np.ndarray]:
    """Gradients of the recurrent parameters and of the embedding table."""
    half = params.fwd_hidden.shape[0]
    if d_hiddens.shape != (tape.inputs.shape[0], 2 * half):
        raise ShapeMismatchError("Hidden-state gradient does not match the encoder tape.")
    fwd = _run_direction_backward(
        tape.inputs, tape.fwd_states, params.fwd_input, params.fwd_hidden, d_hiddens[:, :half]
    )
    bwd = _run_direction_backward(
        tape.inputs[::-1],
        tape.bwd_states[::-1],
        params.bwd_input,
        params.bwd_hidden,
        d_hiddens[::-1, half:],
    )
    d_embedding = np.zeros_like(params.embedding)
    np.add.at(d_embedding, tape.token_ids, fwd[3] + bwd[3][::-1])
    return {
        "embedding": d_embedding,
        "fwd_input": fwd[0],
        "fwd_hidden": fwd[1],
        "fwd_bias": fwd[2],
        "bwd_input": bwd[0],
        "bwd_hidden": bwd[1],
        "bwd_bias": bwd[2],
    }


@dataclass(frozen=True)
class PoolTape:
    """Forward cache of :func:`self_guided_pool`."""

    hiddens: np.ndarray
    alphas: np.ndarray
    mlp_tape: MlpTape


def self_guided_pool(pool: PoolParams, hiddens: np.ndarray) -> Tuple[np.ndarray, PoolTape]:
    """Attention-weighted sum of hidden states followed by an MLP.

    Each state gets the scalar score ``scorer_weight . h_i + scorer_bias``;
    the softmax of the scores weights the sum.

    Returns
    -------
    Tuple[numpy.ndarray, PoolTape]
        Pooled embedding and the reverse-pass cache. ``tape.alphas`` holds the weights.

    """
    if hiddens.ndim != 2 or hiddens.shape[0] < 1:
        raise ShapeMismatchError("Pooling needs at least one hidden state.")
    alphas = softmax(hiddens @ pool.scorer_weight + pool.scorer_bias[0])
    output, mlp_tape = mlp_forward(pool.mlp, alphas @ hiddens)
    return output, PoolTape(hiddens, alphas, mlp_tape)


def pool_backward(
    pool: PoolParams, tape: PoolTape, upstream: np.ndarray
) -> Tuple[Dict[str, object], np.ndarray]:
    """Reverse pass of :func:`self_guided_pool`.

    Returns
    -------
    Tuple[Dict[str, object], numpy.ndarray]
        ``{"scorer_weight", "scorer_bias", "mlp"}`` gradients and the hidden-state gradient.

    """
    mlp_grads, d_pooled = mlp_backward(pool.mlp, tape.mlp_tape, upstream)
    d_hiddens = np.outer(tape.alphas, d_pooled)
    d_scores = softmax_backward(tape.alphas, tape.hiddens @ d_pooled)
    d_hiddens += np.outer(d_scores, pool.scorer_weight)
    grads = {
        "scorer_weight": d_scores @ tape.hiddens,
        "scorer_bias": np.array([d_scores.sum()]),
        "mlp": mlp_grads,
    }
    return grads, d_hiddens
