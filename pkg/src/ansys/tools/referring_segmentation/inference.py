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
"""Provides retrieval of the referred track, prediction files and dataset evaluation."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import json
from pathlib import Path

from beartype.typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np

from ansys.tools.referring_segmentation.dataset.scene import QuerySample, Scene
from ansys.tools.referring_segmentation.embedding import ObjectCandidate, match_score
from ansys.tools.referring_segmentation.errors import DatasetFormatError
from ansys.tools.referring_segmentation.evaluation import (
    EvaluationReport,
    SampleResult,
    embedding_separation,
)
from ansys.tools.referring_segmentation.masks import BinaryMask
from ansys.tools.referring_segmentation.model import ReferringModel
from ansys.tools.referring_segmentation.tracker import TemporalTracker
from ansys.tools.referring_segmentation.utils.config import TrackerConfig
from ansys.tools.referring_segmentation.utils.logger import logger

PREDICTION_VERSION = 1


@dataclass(frozen=True)
class FramePrediction:
    """Predicted mask of one frame and its match score, both ``None`` when absent."""

    frame: int
    mask: Optional[BinaryMask]
    score: Optional[float]

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation."""
        return {
            "frame": self.frame,
            "mask": None if self.mask is None else self.mask.to_dict(),
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "FramePrediction":
        """Inverse of :meth:`to_dict`."""
        mask = values.get("mask")
        score = values.get("score")
        return cls(
            frame=int(values["frame"]),
            mask=None if mask is None else BinaryMask.from_dict(mask),
            score=None if score is None else float(score),
        )


@dataclass(frozen=True)
class Prediction:
    """Answer to one query: the selected track and its per-frame masks."""

    sample_id: int
    scene_id: int
    text: str
    track_id: Optional[int]
    score: float
    frames: Tuple[FramePrediction, ...]

    def mask(self, frame_index: int) -> Optional[BinaryMask]:
        """Predicted mask of a frame."""
        return self.frames[frame_index].mask

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation."""
        return {
            "sample_id": self.sample_id,
            "scene_id": self.scene_id,
            "text": self.text,
            "track_id": self.track_id,
            "score": self.score,
            "frames": [frame.to_dict() for frame in self.frames],
        }

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "Prediction":
        """Inverse of :meth:`to_dict`."""
        try:
            track_id = values["track_id"]
            return cls(
                sample_id=int(values["sample_id"]),
                scene_id=int(values["scene_id"]),
                text=str(values["text"]),
                track_id=None if track_id is None else int(track_id),
                score=float(values["score"]),
                frames=tuple(FramePrediction.from_dict(item) for item in values["frames"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise DatasetFormatError(f"Malformed prediction record: {err}") from err


def save_predictions(predictions: Sequence[Prediction], path: Union[str, Path]) -> Path:
    """Write predictions as a JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    content = {
        "format_version": PREDICTION_VERSION,
        "predictions": [prediction.to_dict() for prediction in predictions],
    }
    path.write_text(json.dumps(content, sort_keys=True, indent=2) + "\n")
    return path


def load_predictions(path: Union[str, Path]) -> List[Prediction]:
    """Read a document written by :func:`save_predictions`.

    Raises
    ------
    DatasetFormatError
        If the file is missing, malformed or of another format version.

    """
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"Prediction file '{path}' does not exist.")
    try:
        content = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise DatasetFormatError(f"Malformed prediction file '{path}': {err}") from err
    if content.get("format_version") != PREDICTION_VERSION:
        raise DatasetFormatError(
            f"'{path}' has format version {content.get('format_version')}, "
            f"expected {PREDICTION_VERSION}."
        )
    return [Prediction.from_dict(item) for item in content.get("predictions", [])]


class ReferringSegmenter:
    """Top-down retrieval of the object a sentence refers to in a video.

    Parameters
    ----------
    model : ReferringModel
        Trained embedding model.
    tracker_config : TrackerConfig, default: None
        Association settings. With ``use_temporal`` off, each frame keeps its
        best-matching candidate independently.

    """

    def __init__(
        self, model: ReferringModel, tracker_config: Optional[TrackerConfig] = None
    ) -> None:
        """Initialize the segmenter."""
        self._model = model
        self._tracker_config = TrackerConfig() if tracker_config is None else tracker_config

    @property
    def model(self) -> ReferringModel:
        """Embedding model."""
        return self._model

    @property
    def tracker_config(self) -> TrackerConfig:
        """Association settings."""
        return self._tracker_config

    def frame_candidates(
        self, scene: Scene, text: str
    ) -> Tuple[np.ndarray, List[List[ObjectCandidate]]]:
        """Sentence embedding and the embedded candidates of every frame."""
        query = self._model.encode_query(text)
        frames = []
        for frame_index, frame in enumerate(scene.frames):
            masks = scene.candidate_masks(frame_index)
            if not masks:
                logger.debug(f"Scene {scene.scene_id} frame {frame_index} has no candidate.")
                frames.append([])
                continue
            frames.append(self._model.embed_frame(frame, masks, query).candidates)
        return query.sentence, frames

    def predict(self, scene: Scene, text: str, sample_id: int = -1) -> Prediction:
        """Per-frame masks of the object ``text`` refers to.

        A track is always returned when any frame has a candidate, even when no
        object fits the sentence well.
        """
        sentence, frames = self.frame_candidates(scene, text)
        if self._tracker_config.use_temporal:
            return self._predict_track(scene, text, sample_id, sentence, frames)
        return self._predict_per_frame(scene, text, sample_id, sentence, frames)

    def _predict_track(self, scene, text, sample_id, sentence, frames) -> Prediction:
        tracker = TemporalTracker(self._tracker_config)
        for frame_index, candidates in enumerate(frames):
            tracker.update(candidates, frame_index)
        if not tracker.tracks:
            return self._empty(scene, text, sample_id)
        track, score = tracker.select(sentence)
        frame_predictions = []
        for frame_index in range(scene.num_frames):
            if frame_index in track.masks:
                frame_predictions.append(
                    FramePrediction(
                        frame_index,
                        track.masks[frame_index],
                        match_score(track.embeddings[frame_index], sentence),
                    )
                )
            else:
                frame_predictions.append(FramePrediction(frame_index, None, None))
        return Prediction(
            sample_id, scene.scene_id, text, track.track_id, score, tuple(frame_predictions)
        )

    def _predict_per_frame(self, scene, text, sample_id, sentence, frames) -> Prediction:
        frame_predictions = []
        scores = []
        for frame_index, candidates in enumerate(frames):
            if not candidates:
                frame_predictions.append(FramePrediction(frame_index, None, None))
                continue
            frame_scores = [match_score(candidate.relation, sentence) for candidate in candidates]
            best = int(np.argmax(frame_scores))
            scores.append(frame_scores[best])
            frame_predictions.append(
                FramePrediction(frame_index, candidates[best].mask, frame_scores[best])
            )
        if not scores:
            return self._empty(scene, text, sample_id)
        return Prediction(
            sample_id, scene.scene_id, text, None, float(np.mean(scores)), tuple(frame_predictions)
        )

    @staticmethod
    def _empty(scene: Scene, text: str, sample_id: int) -> Prediction:
        logger.debug(f"No candidate in scene {scene.scene_id} for '{text}'.")
        frames = tuple(FramePrediction(index, None, None) for index in range(scene.num_frames))
        return Prediction(sample_id, scene.scene_id, text, None, float("nan"), frames)

    def object_embeddings(self, sample: QuerySample) -> List[Dict[int, np.ndarray]]:
        """Per frame, the relation embedding of every candidate linked to an object."""
        _, frames = self.frame_candidates(sample.scene, sample.text)
        result = []
        for frame_index, candidates in enumerate(frames):
            linked = sample.scene.candidates[frame_index]
            result.append(
                {
                    link.object_id: candidate.relation
                    for link, candidate in zip(linked, candidates)
                    if link.object_id >= 0
                }
            )
        return result


def sample_results(sample: QuerySample, prediction: Prediction) -> List[SampleResult]:
    """One result per frame where the referent is annotated."""
    return [
        SampleResult.from_masks(
            prediction.mask(frame_index),
            sample.gt_masks[frame_index],
            sample.sample_id,
            frame_index,
            sample.family,
        )
        for frame_index in sample.annotated_frames
    ]


def evaluate(
    segmenter: ReferringSegmenter,
    samples: Sequence[QuerySample],
    workers: int = 1,
    separation: bool = True,
) -> Tuple[EvaluationReport, List[Prediction]]:
    """Predict every sample and summarize the metrics.

    Parameters
    ----------
    segmenter : ReferringSegmenter
        Retrieval pipeline.
    samples : Sequence[QuerySample]
        Samples to evaluate.
    workers : int, default: 1
        Upper bound on the worker threads.
    separation : bool, default: True
        Whether to add the embedding separation diagnostics.

    Returns
    -------
    Tuple[EvaluationReport, List[Prediction]]
        Report and predictions in sample order.

    """

    def run(sample: QuerySample) -> Prediction:
        return segmenter.predict(sample.scene, sample.text, sample.sample_id)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        predictions = list(executor.map(run, samples))
    results = [
        result
        for sample, prediction in zip(samples, predictions)
        for result in sample_results(sample, prediction)
    ]
    diagnostics: Dict[str, float] = {}
    if separation:
        intra, inter = embedding_separation(segmenter.object_embeddings(s) for s in samples)
        diagnostics = {
            "intra_object_cosine": intra,
            "inter_object_cosine": inter,
            "separation": intra - inter,
        }
    return EvaluationReport.from_results(results, diagnostics), predictions
