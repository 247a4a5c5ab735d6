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
"""Test module for tokenization, the sentence encoder and attention pooling."""
from conftest import make_model, relative_error
import numpy as np
import pytest

from ansys.tools.referring_segmentation.errors import (
    DatasetFormatError,
    NumericalError,
    ShapeMismatchError,
)
from ansys.tools.referring_segmentation.language import (
    PAD_ID,
    UNK_ID,
    PoolParams,
    TokenSequence,
    Vocabulary,
    encode_sequence,
    self_guided_pool,
    split_words,
    swap_direction_tokens,
    tokenize,
)
from ansys.tools.referring_segmentation.numerics import MlpParams, mlp_forward, softmax


def test_tokenize_examples():
    """Lowercases, strips punctuation and pads."""
    vocab = Vocabulary(["a", "red", "ball"])
    sequence = tokenize("A red ball.", vocab)
    assert sequence.length == 3
    assert sequence.tokens == (vocab.id_of("a"), vocab.id_of("red"), vocab.id_of("ball"))
    assert len(sequence.ids) == 20
    assert set(sequence.ids[3:]) == {PAD_ID}


def test_tokenize_truncates_and_marks_unknown_words():
    """Keeps the first 20 words and maps unseen words to the unknown id."""
    vocab = Vocabulary(["word"])
    sequence = tokenize(" ".join(["word"] * 25), vocab)
    assert sequence.length == 20
    assert tokenize("word zebra", vocab).tokens == (vocab.id_of("word"), UNK_ID)


def test_split_words_keeps_non_ascii_letters():
    """Accented and non-Latin letters stay inside their words."""
    assert split_words("Le Cercle Rosé, à gauche") == ["le", "cercle", "rosé", "à", "gauche"]
    assert split_words("der Würfel_2 links") == ["der", "würfel", "2", "links"]
    assert split_words("красный круг") == ["красный", "круг"]
    vocab = Vocabulary.build(["le cercle rosé"])
    assert tokenize("Le cercle ROSÉ", vocab).tokens == tuple(
        vocab.id_of(word) for word in ("le", "cercle", "rosé")
    )


def test_tokenize_empty_text():
    """Text without words cannot be tokenized."""
    with pytest.raises(NumericalError):
        tokenize("  ... ", Vocabulary())


def test_vocabulary_round_trip():
    """Ids are sorted, dense and survive serialization."""
    vocab = Vocabulary.build(["the red circle", "The blue circle!"])
    assert vocab.tokens == ("<pad>", "<unk>", "blue", "circle", "red", "the")
    assert Vocabulary.from_dict(vocab.to_dict()) == vocab
    with pytest.raises(DatasetFormatError):
        Vocabulary.from_dict({"tokens": ["red"]})


def test_token_sequence_padding_invariant():
    """Positions after the length must be padding."""
    with pytest.raises(ShapeMismatchError):
        TokenSequence((3, 4, 5), 2)
    with pytest.raises(ShapeMismatchError):
        TokenSequence((3,), 0)


def test_encode_single_token(micro_model):
    """One token gives one state made of one step in each direction."""
    model = micro_model
    encoder = model.params.encoder()
    sequence = model.tokenize("circle")
    hiddens, _ = encode_sequence(encoder, sequence)
    embedded = encoder.embedding[sequence.tokens[0]]
    forward = np.tanh(encoder.fwd_input @ embedded + encoder.fwd_bias)
    backward = np.tanh(encoder.bwd_input @ embedded + encoder.bwd_bias)
    np.testing.assert_allclose(hiddens, [np.concatenate([forward, backward])], atol=1e-15)


def test_encode_without_recurrence(micro_model):
    """Zero recurrent weights make each state depend on its own token only."""
    model = micro_model
    encoder = model.params.encoder()
    encoder.fwd_hidden[...] = 0.0
    encoder.bwd_hidden[...] = 0.0
    hiddens, _ = encode_sequence(encoder, model.tokenize("red circle red"))
    np.testing.assert_array_equal(hiddens[0], hiddens[2])


def test_encode_unrolled_oracle(micro_model):
    """Three tokens recomputed step by step."""
    model = micro_model
    encoder = model.params.encoder()
    sequence = model.tokenize("the red circle")
    inputs = [encoder.embedding[token] for token in sequence.tokens]
    state = np.zeros(3)
    forward = []
    for x in inputs:
        state = np.tanh(encoder.fwd_input @ x + encoder.fwd_hidden @ state + encoder.fwd_bias)
        forward.append(state)
    state = np.zeros(3)
    backward = [None] * 3
    for step in (2, 1, 0):
        state = np.tanh(
            encoder.bwd_input @ inputs[step] + encoder.bwd_hidden @ state + encoder.bwd_bias
        )
        backward[step] = state
    expected = [np.concatenate(pair) for pair in zip(forward, backward)]
    hiddens, _ = encode_sequence(encoder, sequence)
    np.testing.assert_allclose(hiddens, expected, atol=1e-14)


def test_encode_ignores_padding_length(micro_model):
    """The padded length does not change the states."""
    model = micro_model
    encoder = model.params.encoder()
    short = tokenize("the red circle", model.vocab, max_length=5)
    long = tokenize("the red circle", model.vocab, max_length=20)
    np.testing.assert_array_equal(
        encode_sequence(encoder, short)[0], encode_sequence(encoder, long)[0]
    )


def _pool(rng, zero_scorer=False):
    weight = np.zeros(6) if zero_scorer else rng.normal(size=6)
    return PoolParams(weight, np.array([0.1]), MlpParams.initialize([6, 4, 4], rng, scale=0.5))


def test_pool_single_state(rng):
    """A single state gets all the weight."""
    pool = _pool(rng)
    hiddens = rng.normal(size=(1, 6))
    output, tape = self_guided_pool(pool, hiddens)
    np.testing.assert_array_equal(tape.alphas, [1.0])
    np.testing.assert_allclose(output, mlp_forward(pool.mlp, hiddens[0])[0], atol=1e-15)


def test_pool_zero_scorer_is_mean(rng):
    """Without a scorer the pooling is the mean of the states."""
    pool = _pool(rng, zero_scorer=True)
    hiddens = rng.normal(size=(4, 6))
    output, tape = self_guided_pool(pool, hiddens)
    np.testing.assert_allclose(tape.alphas, [0.25] * 4, atol=1e-15)
    np.testing.assert_allclose(output, mlp_forward(pool.mlp, hiddens.mean(axis=0))[0], atol=1e-14)


def test_pool_weights_softmax_oracle(rng):
    """Weights are the softmax of the linear scores and sum to one."""
    pool = _pool(rng)
    hiddens = rng.normal(size=(4, 6))
    _, tape = self_guided_pool(pool, hiddens)
    scores = [float(np.dot(pool.scorer_weight, h)) + 0.1 for h in hiddens]
    np.testing.assert_allclose(tape.alphas, softmax(scores), atol=1e-15)
    assert abs(tape.alphas.sum() - 1.0) < 1e-12
    assert np.all(tape.alphas > 0.0)


def test_swap_direction_examples():
    """Swaps left and right at the id level and is an involution."""
    vocab = Vocabulary(["the", "left", "right", "dog", "runs", "of", "box"])
    cases = {
        "the left dog": "the right dog",
        "the dog runs": "the dog runs",
        "left of the right box": "right of the left box",
    }
    for text, expected in cases.items():
        swapped = swap_direction_tokens(tokenize(text, vocab), vocab)
        assert swapped == tokenize(expected, vocab)
        assert swap_direction_tokens(swapped, vocab) == tokenize(text, vocab)


def test_swap_direction_custom_table():
    """A custom table swaps other word pairs."""
    vocab = Vocabulary(["the", "square", "moving", "up", "down", "left"])
    table = {"up": "down", "down": "up"}
    swapped = swap_direction_tokens(tokenize("the square moving up left", vocab), vocab, table)
    assert swapped == tokenize("the square moving down left", vocab)
    assert split_words("The Square, moving UP!") == ["the", "square", "moving", "up"]


def test_encoder_and_pool_gradients(micro_settings, numeric_gradient):
    """Sentence-side gradients agree with central differences."""
    model = make_model(micro_settings, seed=1)
    upstream = np.random.default_rng(5).normal(size=4)
    tokens = model.tokenize("the red circle")

    def objective():
        return float(model.encode_query(tokens).sentence @ upstream)

    query = model.encode_query(tokens)
    grads = model.params.zeros_like()
    model.backward_query(query, upstream, np.zeros_like(query.hiddens), grads)
    for name in model.params:
        if not name.startswith(("encoder.", "sentence_pool.")):
            continue
        numeric = numeric_gradient(objective, model.params[name])
        assert relative_error(grads[name], numeric).max() < 1e-4, name
