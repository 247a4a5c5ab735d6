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
"""Provides cross-frame association of candidates into tracks and track retrieval."""
from dataclasses import dataclass, field
from enum import Enum

from beartype.typing import Dict, List, Optional, Sequence, Tuple
import numpy as np

from ansys.tools.referring_segmentation.embedding import ObjectCandidate
from ansys.tools.referring_segmentation.errors import NumericalError, ReferringSegmentationError
from ansys.tools.referring_segmentation.masks import BinaryMask, mask_iou
from ansys.tools.referring_segmentation.numerics import as_float_array, cosine_similarity
from ansys.tools.referring_segmentation.utils.config import TrackerConfig
from ansys.tools.referring_segmentation.utils.logger import logger


class TrackState(Enum):
    """Lifecycle state of a track."""

    ACTIVE = "active"
    ENDED = "ended"


@dataclass
class Track:
    """Chain of per-frame candidate assignments of one object.

    Frames may be skipped, which gives intermittent tracks.

    Attributes
    ----------
    track_id : int
        Unique id within a video.
    slots : Dict[int, int]
        Frame index to candidate index, in increasing frame order.
    embeddings : Dict[int, numpy.ndarray]
        Relation-enhanced embedding of the assigned candidate of each frame.
    masks : Dict[int, BinaryMask]
        Mask of the assigned candidate of each frame.
    last_update : int
        Frame index of the latest assignment.
    misses : int
        Consecutive rounds without an assignment.
    state : TrackState
        Lifecycle state.

    """

    track_id: int
    slots: Dict[int, int] = field(default_factory=dict)
    embeddings: Dict[int, np.ndarray] = field(default_factory=dict)
    masks: Dict[int, BinaryMask] = field(default_factory=dict)
    last_update: int = -1
    misses: int = 0
    state: TrackState = TrackState.ACTIVE

    @property
    def frames(self) -> List[int]:
        """Frames with an assignment, in increasing order."""
        return list(self.slots)

    @property
    def is_active(self) -> bool:
        """Whether the track still accepts assignments."""
        return self.state is TrackState.ACTIVE

    def assign(self, frame_index: int, candidate_index: int, candidate: ObjectCandidate) -> None:
        """Append a candidate of a later frame.

        Raises
        ------
        ReferringSegmentationError
            If the track has ended or ``frame_index`` is not after the last assignment.

        """
        if not self.is_active:
            raise ReferringSegmentationError(f"Track {self.track_id} has ended.")
        if frame_index <= self.last_update:
            raise ReferringSegmentationError(
                f"Track {self.track_id} already has frame {self.last_update}, "
                f"cannot add {frame_index}."
            )
        self.slots[frame_index] = candidate_index
        self.embeddings[frame_index] = candidate.relation
        self.masks[frame_index] = candidate.mask
        self.last_update = frame_index
        self.misses = 0

    def representative(self) -> ObjectCandidate:
        """Candidate stand-in of the most recent assignment, used for association."""
        mask = self.masks[self.last_update]
        return ObjectCandidate(mask, None, relation=self.embeddings[self.last_update])


def association_similarity(a: ObjectCandidate, b: ObjectCandidate, alpha_iou: float) -> float:
    """Cosine of the relation embeddings plus ``alpha_iou`` times the mask IoU."""
    if a.relation is None or b.relation is None:
        raise NumericalError("Association needs relation-enhanced embeddings.")
    return cosine_similarity(a.relation, b.relation) + alpha_iou * mask_iou(a.mask, b.mask)


def _min_cost_assignment(cost: np.ndarray) -> np.ndarray:
    """Column of each row for a cost matrix with no more rows than columns.

    Shortest augmenting paths with row and column potentials, ``O(n^2 m)``.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for row in range(1, n + 1):
        owner[0] = row
        column = 0
        min_slack = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[column] = True
            current_row = owner[column]
            free = ~used[1:]
            reduced = cost[current_row - 1] - u[current_row] - v[1:]
            better = free & (reduced < min_slack[1:])
            min_slack[1:][better] = reduced[better]
            way[1:][better] = column
            candidates = np.where(free, min_slack[1:], np.inf)
            next_column = int(np.argmin(candidates)) + 1
            delta = candidates[next_column - 1]
            u[owner[used]] += delta
            v[used] -= delta
            min_slack[~used] -= delta
            column = next_column
            if owner[column] == 0:
                break
        while column:
            previous = way[column]
            owner[column] = owner[previous]
            column = previous
    assignment = np.full(n, -1, dtype=np.int64)
    for col in range(1, m + 1):
        if owner[col]:
            assignment[owner[col] - 1] = col - 1
    return assignment


def hungarian_assign(similarity, gamma: float) -> Dict[int, int]:
    """Maximum-similarity one-to-one matching, then thresholding.

    The optimum is computed on the full matrix as a minimum-cost assignment of
    ``max(similarity) - similarity``. Pairs with similarity ``<= gamma`` are
    dropped afterwards.

    Parameters
    ----------
    similarity : array_like
        ``(tracks, candidates)`` matrix of any rectangular shape.
    gamma : float
        Acceptance threshold.

    Returns
    -------
    Dict[int, int]
        Row index to column index of the accepted pairs.

    Raises
    ------
    NumericalError
        If the matrix has non-finite entries.

    """
    similarity = as_float_array(similarity, "similarity")
    if similarity.ndim != 2:
        raise NumericalError(f"Similarity must be a matrix, got shape {similarity.shape}.")
    if similarity.size == 0:
        return {}
    transposed = similarity.shape[0] > similarity.shape[1]
    matrix = similarity.T if transposed else similarity
    columns = _min_cost_assignment(matrix.max() - matrix)
    pairs = [(row, int(col)) for row, col in enumerate(columns)]
    if transposed:
        pairs = [(col, row) for row, col in pairs]
    return {row: col for row, col in sorted(pairs) if similarity[row, col] > gamma}


def update_tracks(
    tracks: List[Track],
    frame_candidates: Sequence[ObjectCandidate],
    frame_index: int,
    cfg: TrackerConfig,
) -> List[Track]:
    """Associate the candidates of one frame with the active tracks.

    Matched tracks are extended. Active tracks left unmatched for ``cfg.beta``
    consecutive rounds end. Unmatched candidates start new tracks with fresh ids.

    Returns
    -------
    List[Track]
        ``tracks`` followed by the newly started tracks.

    """
    active = [track for track in tracks if track.is_active]
    matches: Dict[int, int] = {}
    if active and frame_candidates:
        representatives = [track.representative() for track in active]
        similarity = np.array(
            [
                [association_similarity(rep, cand, cfg.alpha_iou) for cand in frame_candidates]
                for rep in representatives
            ]
        )
        matches = hungarian_assign(similarity, cfg.gamma)

    for row, track in enumerate(active):
        if row in matches:
            candidate_index = matches[row]
            track.assign(frame_index, candidate_index, frame_candidates[candidate_index])
        else:
            track.misses += 1
            if track.misses >= cfg.beta:
                track.state = TrackState.ENDED
                logger.debug(f"Track {track.track_id} ended at frame {frame_index}.")

    matched = set(matches.values())
    next_id = max((track.track_id for track in tracks), default=-1) + 1
    updated = list(tracks)
    for candidate_index, candidate in enumerate(frame_candidates):
        if candidate_index in matched:
            continue
        track = Track(track_id=next_id)
        track.assign(frame_index, candidate_index, candidate)
        updated.append(track)
        next_id += 1
    return updated


def score_track(track: Track, sentence: np.ndarray, mode: str = "mean") -> float:
    """Confidence of a track: mean (or max) cosine of its embeddings with the sentence.

    Raises
    ------
    ReferringSegmentationError
        If the track has no assigned frame.

    """
    if not track.embeddings:
        raise ReferringSegmentationError(f"Track {track.track_id} has no assigned frame.")
    scores = [cosine_similarity(embedding, sentence) for embedding in track.embeddings.values()]
    return float(max(scores)) if mode == "max" else float(np.mean(scores))


def select_track(tracks: Sequence[Track], sentence: np.ndarray, mode: str = "mean") -> Track:
    """Track with the highest confidence. Ties go to the lower track id.

    Raises
    ------
    ReferringSegmentationError
        If ``tracks`` is empty.

    """
    if not tracks:
        raise ReferringSegmentationError("Cannot select a track among none.")
    return max(tracks, key=lambda track: (score_track(track, sentence, mode), -track.track_id))


class TemporalTracker:
    """Stateful tracker of one video.

    Parameters
    ----------
    config : TrackerConfig, default: None
        Association settings. The defaults are used when ``None``.

    """

    def __init__(self, config: Optional[TrackerConfig] = None) -> None:
        """Initialize an empty tracker."""
        self._config = TrackerConfig() if config is None else config
        self._tracks: List[Track] = []
        self._frame_index = -1

    @property
    def config(self) -> TrackerConfig:
        """Association settings."""
        return self._config

    @property
    def tracks(self) -> List[Track]:
        """Every track, active or ended, in creation order."""
        return self._tracks

    def update(
        self, candidates: Sequence[ObjectCandidate], frame_index: Optional[int] = None
    ) -> None:
        """Process the candidates of the next frame."""
        self._frame_index = self._frame_index + 1 if frame_index is None else frame_index
        self._tracks = update_tracks(self._tracks, candidates, self._frame_index, self._config)

    def select(self, sentence: np.ndarray) -> Tuple[Track, float]:
        """Best track for a sentence embedding and its confidence."""
        track = select_track(self._tracks, sentence, self._config.track_score)
        return track, score_track(track, sentence, self._config.track_score)
