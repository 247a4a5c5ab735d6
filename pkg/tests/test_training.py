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
"""Test module for the contrastive objective, the optimizer and the training loop."""
import dataclasses
import math

from conftest import make_model, relative_error
import numpy as np
import pytest

from ansys.tools.referring_segmentation.dataset.generator import generate_dataset, render_scene
from ansys.tools.referring_segmentation.dataset.scene import (
    Candidate,
    ObjectSpec,
    QuerySample,
    SceneSpec,
)
from ansys.tools.referring_segmentation.errors import (
    DatasetFormatError,
    NumericalError,
    ShapeMismatchError,
)
from ansys.tools.referring_segmentation.inference import ReferringSegmenter, evaluate
from ansys.tools.referring_segmentation.language import swap_direction_tokens, tokenize
from ansys.tools.referring_segmentation.masks import BinaryMask, horizontal_flip
from ansys.tools.referring_segmentation.training import (
    AdamState,
    PlateauScheduler,
    PlateauState,
    Trainer,
    adam_step,
    augment_flip,
    contrastive_loss,
    contrastive_scores,
    frame_loss,
    gt_candidate,
    load_checkpoint,
    plateau_scheduler,
    sample_loss_and_grads,
    save_checkpoint,
    training_step,
)
from ansys.tools.referring_segmentation.utils.config import (
    EncoderConfig,
    ModelConfig,
    Settings,
    TrainingConfig,
)

LEFT_QUERY = "the circle left of the blue circle"


@pytest.fixture
def left_sample(two_circles):
    """Relation query about the left circle of ``two_circles``."""
    return QuerySample(0, two_circles, LEFT_QUERY, "relation", 0)


@pytest.fixture
def lone_sample(small_config):
    """Sample of a scene with a single object, hence a single candidate per frame."""
    spec = SceneSpec(1, 16, 16, 3, (ObjectSpec(0, "square", "red", 4, 8, 8, 1, 0),))
    scene = render_scene(spec, np.random.default_rng(1), small_config)
    return QuerySample(1, scene, "the red square", "attribute", 0)


def test_contrastive_scores_examples():
    """Probabilities of two orthogonal candidates at unit temperature."""
    scores = contrastive_scores([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], tau=1.0)
    np.testing.assert_allclose(scores, [math.e / (math.e + 1.0), 1.0 / (math.e + 1.0)])
    np.testing.assert_allclose(contrastive_scores([[0.6, 0.8]], [1.0, 0.0]), [1.0])


def test_contrastive_scores_errors():
    """Unnormalized inputs, bad temperatures and mismatched widths raise."""
    with pytest.raises(NumericalError):
        contrastive_scores([[2.0, 0.0]], [1.0, 0.0])
    with pytest.raises(NumericalError):
        contrastive_scores([[1.0, 0.0]], [1.0, 0.0], tau=0.0)
    with pytest.raises(ShapeMismatchError):
        contrastive_scores([[1.0, 0.0, 0.0]], [1.0, 0.0])


def test_contrastive_loss_examples():
    """Uniform scores, a certain miss and the error cases."""
    assert contrastive_loss([0.5, 0.5], 0) == pytest.approx(math.log(2.0))
    assert contrastive_loss([1.0], 0) == 0.0
    assert contrastive_loss([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ShapeMismatchError):
        contrastive_loss([0.5, 0.5], 2)
    with pytest.raises(NumericalError):
        contrastive_loss([0.5, 0.6], 0)


def test_contrastive_loss_permutation_invariance(rng):
    """Reordering candidates together with the target leaves the loss unchanged."""
    embeddings = rng.normal(size=(5, 3))
    embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
    sentence = np.array([0.0, 0.6, 0.8])
    loss = contrastive_loss(contrastive_scores(embeddings, sentence), 2)
    order = rng.permutation(5)
    target = int(np.flatnonzero(order == 2)[0])
    permuted = contrastive_loss(contrastive_scores(embeddings[order], sentence), target)
    assert permuted == pytest.approx(loss, abs=1e-12)


def test_frame_loss_finite_differences(rng, numeric_gradient):
    """Gradients through the normalization agree with central differences."""
    relation = rng.normal(size=(4, 3))
    sentence = rng.normal(size=3)

    def objective():
        return frame_loss(relation, sentence, 1, 0.5)[0]

    _, d_relation, d_sentence = frame_loss(relation, sentence, 1, 0.5)
    assert relative_error(d_relation, numeric_gradient(objective, relation)).max() < 1e-4
    assert relative_error(d_sentence, numeric_gradient(objective, sentence)).max() < 1e-4


def test_frame_loss_single_candidate(rng):
    """A single candidate has zero loss and zero gradients."""
    loss, d_relation, d_sentence = frame_loss(rng.normal(size=(1, 3)), rng.normal(size=3), 0, 0.1)
    assert loss == 0.0
    assert not d_relation.any()
    assert not d_sentence.any()


def test_gt_candidate():
    """Best IoU above the threshold, or nothing."""
    gt = BinaryMask.from_bitmap([[1, 1, 0, 0]])
    candidates = [
        BinaryMask.from_bitmap([[0, 0, 1, 1]]),
        BinaryMask.from_bitmap([[1, 1, 1, 0]]),
        BinaryMask.from_bitmap([[0, 1, 0, 0]]),
    ]
    assert gt_candidate(candidates, gt) == 1
    assert gt_candidate(candidates, gt, threshold=0.7) is None
    assert gt_candidate([], gt) is None


def test_adam_first_step_is_sign_descent():
    """The bias-corrected first step moves every entry by the learning rate."""
    params = {"w": np.array([1.0, -2.0, 0.5])}
    state = AdamState({"w": np.zeros(3)}, {"w": np.zeros(3)}, learning_rate=0.01)
    adam_step(params, {"w": np.array([3.0, -0.2, 0.0])}, state)
    np.testing.assert_allclose(params["w"], [0.99, -1.99, 0.5], atol=1e-8)
    assert state.step == 1


def test_adam_quadratic_oracle():
    """Three steps on ``x ** 2`` recomputed by hand."""
    params = {"x": np.array([1.0])}
    state = AdamState({"x": np.zeros(1)}, {"x": np.zeros(1)}, learning_rate=0.1)
    x, m, v = 1.0, 0.0, 0.0
    for step in range(1, 4):
        grad = 2.0 * x
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad**2
        x -= 0.1 * (m / (1.0 - 0.9**step)) / (math.sqrt(v / (1.0 - 0.999**step)) + 1e-8)
        adam_step(params, {"x": 2.0 * params["x"]}, state)
        assert params["x"][0] == pytest.approx(x, abs=1e-12)


def test_adam_shape_mismatch():
    """Gradients must match their parameters."""
    state = AdamState({"w": np.zeros(2)}, {"w": np.zeros(2)}, learning_rate=0.1)
    with pytest.raises(ShapeMismatchError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, state)


def test_plateau_scheduler_examples():
    """Improving losses keep the rate and a two-epoch plateau divides it by ten."""
    assert plateau_scheduler([1.0, 0.9, 0.8], PlateauState(1e-3)) == 1e-3

    state = PlateauState(1e-3)
    assert plateau_scheduler([1.0, 1.0], state) == 1e-3
    assert plateau_scheduler([1.0, 1.0, 1.0], state) == pytest.approx(1e-4)

    scheduler = PlateauScheduler(1e-3)
    rates = [scheduler.step(loss) for loss in (1.0, 0.99, 0.99, 0.99)]
    assert rates[:3] == [1e-3, 1e-3, 1e-3]
    assert rates[3] == pytest.approx(1e-4)
    assert scheduler.state.reductions == 1

    with pytest.raises(NumericalError):
        plateau_scheduler([], PlateauState(1e-3))


def test_augment_flip_probabilities(left_sample):
    """Probability zero never flips and flipping twice restores the sample."""
    rng = np.random.default_rng(0)
    assert augment_flip(left_sample, 0.0, rng) is left_sample
    twice = augment_flip(augment_flip(left_sample, 1.0, rng), 1.0, rng)
    assert twice == left_sample


def test_augment_flip_mirrors_masks_and_words(left_sample, micro_model):
    """The flipped sample refers to the mirrored object with the mirrored tokens."""
    vocab = micro_model.vocab
    flipped = augment_flip(left_sample, 1.0, np.random.default_rng(0))
    assert flipped.text == left_sample.text
    assert flipped.tokens(vocab) == tokenize("the circle right of the blue circle", vocab)
    assert flipped.tokens(vocab) == swap_direction_tokens(tokenize(LEFT_QUERY, vocab), vocab)
    assert left_sample.tokens(vocab) == tokenize(LEFT_QUERY, vocab)
    for before, after in zip(left_sample.gt_masks, flipped.gt_masks):
        assert after == horizontal_flip(before)
    assert flipped.referent_id == left_sample.referent_id


def test_flipped_sample_trains_on_swapped_tokens(micro_model, micro_settings, left_sample):
    """A mirrored sample trains like the same scene described with the swapped sentence."""
    flipped = left_sample.flipped()
    rewritten = dataclasses.replace(
        left_sample, scene=flipped.scene, text="the circle right of the blue circle"
    )
    loss, grads = sample_loss_and_grads(micro_model, flipped, micro_settings.training)
    expected_loss, expected_grads = sample_loss_and_grads(
        micro_model, rewritten, micro_settings.training
    )
    assert loss == pytest.approx(expected_loss, abs=1e-12)
    for name, grad in expected_grads.items():
        np.testing.assert_allclose(grads[name], grad, atol=1e-12)


def test_sample_without_linked_candidate(micro_model, micro_settings, left_sample):
    """A sample whose candidates miss the referent everywhere yields nothing."""
    corner = BinaryMask.from_bitmap(np.pad([[True]], ((0, 15), (0, 15))))
    scene = dataclasses.replace(
        left_sample.scene, candidates=tuple((Candidate(corner, -1),) for _ in range(3))
    )
    sample = dataclasses.replace(left_sample, scene=scene)
    assert sample_loss_and_grads(micro_model, sample, micro_settings.training) is None

    _, loss, used = training_step(
        micro_model, [sample], AdamState.create(micro_model.params, 0.1), micro_settings.training
    )
    assert (loss, used) == (0.0, 0)


def test_training_step_zero_learning_rate(micro_model, micro_settings, left_sample):
    """A zero learning rate leaves the parameters unchanged."""
    before = micro_model.params.copy()
    optimizer = AdamState.create(micro_model.params, 0.0)
    _, loss, used = training_step(micro_model, [left_sample], optimizer, micro_settings.training)
    assert used == 1 and loss > 0.0
    assert all(np.array_equal(before[name], micro_model.params[name]) for name in before)


def test_training_step_single_candidate(micro_model, micro_settings, lone_sample):
    """Single-candidate samples have zero loss and produce no update."""
    before = micro_model.params.copy()
    optimizer = AdamState.create(micro_model.params, 0.1)
    _, loss, used = training_step(micro_model, [lone_sample], optimizer, micro_settings.training)
    assert (loss, used) == (0.0, 1)
    assert all(np.array_equal(before[name], micro_model.params[name]) for name in before)


def test_training_step_descends(micro_model, micro_settings, left_sample):
    """A small step on a batch lowers the loss of that batch."""
    optimizer = AdamState.create(micro_model.params, 1e-3)
    _, first, _ = training_step(micro_model, [left_sample], optimizer, micro_settings.training)
    _, second, _ = training_step(micro_model, [left_sample], optimizer, micro_settings.training)
    assert second < first


def test_training_step_worker_count(micro_settings, left_sample, lone_sample):
    """Parallel gradient computation gives the same update."""
    results = []
    for workers in (1, 3):
        model = make_model(micro_settings, seed=6)
        optimizer = AdamState.create(model.params, 1e-2)
        batch = [left_sample, lone_sample, left_sample.flipped()]
        _, loss, _ = training_step(model, batch, optimizer, micro_settings.training, workers)
        results.append((loss, model.params))
    assert results[0][0] == results[1][0]
    assert all(np.array_equal(results[0][1][name], results[1][1][name]) for name in results[0][1])


def test_trainer_is_reproducible(micro_settings, small_dataset):
    """Two runs with the same seed produce the same weights and loss log."""
    samples = small_dataset.split("train")
    runs = []
    for _ in range(2):
        trainer = Trainer(micro_settings, small_dataset.vocabulary)
        trainer.fit(samples, epochs=2)
        runs.append(trainer)
    first, second = runs
    assert [r.to_dict() for r in first.history] == [r.to_dict() for r in second.history]
    batches = math.ceil(len(samples) / micro_settings.training.batch_size)
    assert first.step == second.step == 2 * batches
    params = first.model.params
    assert all(np.array_equal(params[name], second.model.params[name]) for name in params)


def test_short_training_run_fits_attribute_queries(small_config):
    """A few epochs on small scenes lower the loss and retrieve better than chance."""
    generator = dataclasses.replace(
        small_config, families=("attribute",), scenes=8, test_fraction=0.25
    )
    settings = Settings(
        encoder=EncoderConfig(embedding_dim=8, hidden_dim=6),
        model=ModelConfig(feature_dim=8, embedding_dim=8),
        training=TrainingConfig(batch_size=4, epochs=20, learning_rate=0.01, flip_prob=0.0),
        generator=generator,
    )
    dataset = generate_dataset(generator, seed=5)
    samples = dataset.split("train")
    trainer = Trainer(settings, dataset.vocabulary)
    history = trainer.fit(samples)
    assert len(history) == 20
    assert all(record.skipped == 0 for record in history)
    assert history[-1].loss < history[0].loss

    chance = np.mean(
        [
            1.0 / len(sample.scene.candidates[frame_index])
            for sample in samples
            for frame_index in sample.annotated_frames
        ]
    )
    report, _ = evaluate(
        ReferringSegmenter(trainer.model, settings.tracker), samples, separation=False
    )
    assert report.metrics["referent_accuracy"] > chance


def test_checkpoint_round_trip(tmp_path, micro_model, micro_settings, left_sample):
    """Weights come back bitwise and give the same loss."""
    path = save_checkpoint(tmp_path / "checkpoint.npz", micro_model, micro_settings, step=7)
    checkpoint = load_checkpoint(path)
    assert checkpoint.step == 7
    assert checkpoint.settings == micro_settings
    assert checkpoint.model.vocab == micro_model.vocab
    assert list(checkpoint.model.params) == list(micro_model.params)
    for name in micro_model.params:
        assert np.array_equal(checkpoint.model.params[name], micro_model.params[name])
    expected, _ = sample_loss_and_grads(micro_model, left_sample, micro_settings.training)
    loaded, _ = sample_loss_and_grads(checkpoint.model, left_sample, checkpoint.settings.training)
    assert loaded == expected


def test_checkpoint_errors(tmp_path):
    """Missing and garbage files raise a format error."""
    with pytest.raises(DatasetFormatError):
        load_checkpoint(tmp_path / "missing.npz")
    garbage = tmp_path / "garbage.npz"
    garbage.write_bytes(b"definitely not an archive")
    with pytest.raises(DatasetFormatError):
        load_checkpoint(garbage)
