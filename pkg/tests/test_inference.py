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
"""Test module for track retrieval, prediction files and dataset evaluation."""
import dataclasses
import json

from conftest import make_model
import numpy as np
import pytest

from ansys.tools.referring_segmentation.errors import DatasetFormatError
from ansys.tools.referring_segmentation.inference import (
    ReferringSegmenter,
    evaluate,
    load_predictions,
    sample_results,
    save_predictions,
)
from ansys.tools.referring_segmentation.utils.config import TrackerConfig


@pytest.fixture
def dataset_model(micro_settings, small_dataset):
    """Micro model over the vocabulary of the small dataset."""
    return make_model(micro_settings, vocab=small_dataset.vocabulary, seed=2)


def _object_of(scene, frame_index, mask):
    return next(oid for oid, gt in scene.object_masks[frame_index].items() if gt == mask)


def test_predict_follows_one_object(dataset_model, two_circles):
    """Static objects keep their identity, so every frame returns the same object."""
    segmenter = ReferringSegmenter(dataset_model)
    prediction = segmenter.predict(two_circles, "the red circle", sample_id=7)
    assert (prediction.sample_id, prediction.scene_id) == (7, two_circles.scene_id)
    assert prediction.track_id is not None
    assert len(prediction.frames) == two_circles.num_frames
    objects = {_object_of(two_circles, f.frame, f.mask) for f in prediction.frames}
    assert len(objects) == 1
    frame_scores = [f.score for f in prediction.frames]
    assert prediction.score == pytest.approx(np.mean(frame_scores))


def test_predict_per_frame(dataset_model, two_circles):
    """Without tracks each frame keeps its best candidate."""
    segmenter = ReferringSegmenter(dataset_model, TrackerConfig(use_temporal=False))
    prediction = segmenter.predict(two_circles, "the blue circle")
    assert prediction.track_id is None
    sentence, frames = segmenter.frame_candidates(two_circles, "the blue circle")
    for frame_prediction, candidates in zip(prediction.frames, frames):
        scores = [
            float(
                np.dot(c.relation, sentence)
                / np.linalg.norm(c.relation)
                / np.linalg.norm(sentence)
            )
            for c in candidates
        ]
        assert frame_prediction.score == pytest.approx(max(scores))
        assert frame_prediction.mask == candidates[int(np.argmax(scores))].mask
    assert prediction.score == pytest.approx(np.mean([f.score for f in prediction.frames]))


@pytest.mark.parametrize("use_temporal", [True, False])
def test_predict_without_candidates(dataset_model, two_circles, use_temporal):
    """A scene without candidates yields no masks and an undefined score."""
    empty = dataclasses.replace(two_circles, candidates=((),) * two_circles.num_frames)
    segmenter = ReferringSegmenter(dataset_model, TrackerConfig(use_temporal=use_temporal))
    prediction = segmenter.predict(empty, "the red circle")
    assert prediction.track_id is None
    assert np.isnan(prediction.score)
    assert all(f.mask is None and f.score is None for f in prediction.frames)


def test_prediction_file_round_trip(tmp_path, dataset_model, small_dataset):
    """Saved predictions load back equal."""
    segmenter = ReferringSegmenter(dataset_model)
    predictions = [
        segmenter.predict(s.scene, s.text, s.sample_id) for s in small_dataset.samples[:3]
    ]
    path = save_predictions(predictions, tmp_path / "out" / "predictions.json")
    assert load_predictions(path) == predictions


def test_prediction_file_errors(tmp_path):
    """Missing files, other versions and malformed content raise."""
    with pytest.raises(DatasetFormatError):
        load_predictions(tmp_path / "missing.json")
    path = tmp_path / "predictions.json"
    path.write_text("[not json")
    with pytest.raises(DatasetFormatError):
        load_predictions(path)
    path.write_text(json.dumps({"format_version": 9, "predictions": []}))
    with pytest.raises(DatasetFormatError):
        load_predictions(path)
    path.write_text(json.dumps({"format_version": 1, "predictions": [{"sample_id": 0}]}))
    with pytest.raises(DatasetFormatError):
        load_predictions(path)


def test_sample_results_cover_annotated_frames(dataset_model, small_dataset):
    """One result per frame where the referent is visible."""
    segmenter = ReferringSegmenter(dataset_model)
    sample = small_dataset.samples[0]
    results = sample_results(sample, segmenter.predict(sample.scene, sample.text, sample.sample_id))
    assert [r.frame for r in results] == sample.annotated_frames
    assert all(r.sample_id == sample.sample_id and r.family == sample.family for r in results)


def test_evaluate_report(dataset_model, small_dataset):
    """Metrics, diagnostics and predictions of a split, independent of the worker count."""
    samples = small_dataset.split("test")
    segmenter = ReferringSegmenter(dataset_model)
    report, predictions = evaluate(segmenter, samples)
    assert [p.sample_id for p in predictions] == [s.sample_id for s in samples]
    assert {"overall_iou", "mean_iou", "precision@0.5", "map_50_95"} <= set(report.metrics)
    assert set(report.diagnostics) == {"intra_object_cosine", "inter_object_cosine", "separation"}
    assert report.diagnostics["separation"] == pytest.approx(
        report.diagnostics["intra_object_cosine"] - report.diagnostics["inter_object_cosine"]
    )
    threaded, _ = evaluate(segmenter, samples, workers=3)
    assert threaded.key_values() == report.key_values()
    bare, _ = evaluate(segmenter, samples, separation=False)
    assert bare.diagnostics == {}
