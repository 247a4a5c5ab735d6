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
"""Test module for candidate association and track retrieval."""
import itertools

import numpy as np
import pytest

from ansys.tools.referring_segmentation.embedding import ObjectCandidate
from ansys.tools.referring_segmentation.errors import NumericalError, ReferringSegmentationError
from ansys.tools.referring_segmentation.masks import BinaryMask
from ansys.tools.referring_segmentation.tracker import (
    TemporalTracker,
    Track,
    TrackState,
    association_similarity,
    hungarian_assign,
    score_track,
    select_track,
    update_tracks,
)
from ansys.tools.referring_segmentation.utils.config import TrackerConfig


def _strip(start, stop, width=8):
    bitmap = np.zeros((1, width), dtype=bool)
    bitmap[0, start:stop] = True
    return BinaryMask.from_bitmap(bitmap)


def _candidate(relation, mask=None):
    mask = _strip(0, 2) if mask is None else mask
    return ObjectCandidate(mask, None, relation=np.asarray(relation, dtype=np.float64))


def _track(track_id, embeddings):
    track = Track(track_id)
    for frame, embedding in enumerate(embeddings):
        track.assign(frame, 0, _candidate(embedding))
    return track


def test_association_similarity_examples():
    """Identical, unrelated and partially overlapping candidates."""
    a = _candidate([1.0, 0.0], _strip(0, 4))
    assert association_similarity(a, a, 0.5) == pytest.approx(1.5)
    orthogonal = _candidate([0.0, 1.0], _strip(5, 8))
    assert association_similarity(a, orthogonal, 0.5) == pytest.approx(0.0)
    # cosine 0.6, IoU 2 / 5
    b = _candidate([0.6, 0.8], _strip(2, 5))
    assert association_similarity(a, b, 0.5) == pytest.approx(0.8)
    assert association_similarity(a, b, 0.0) == pytest.approx(0.6)


def test_association_similarity_needs_relation():
    """Candidates without relation embeddings cannot be associated."""
    with pytest.raises(NumericalError):
        association_similarity(ObjectCandidate(_strip(0, 1), None), _candidate([1.0]), 0.5)


def test_hungarian_examples():
    """Global optimum first, threshold second."""
    assert hungarian_assign([[0.9, 0.95], [0.2, 0.1]], 0.8) == {0: 1}
    assert hungarian_assign([[0.9, 0.1], [0.1, 0.9]], 0.8) == {0: 0, 1: 1}
    assert hungarian_assign([[0.5, 0.4]], 0.8) == {}
    assert hungarian_assign([[0.95], [0.85], [0.1]], 0.8) == {0: 0}
    assert hungarian_assign(np.zeros((0, 3)), 0.8) == {}
    assert hungarian_assign(np.zeros((2, 0)), 0.8) == {}


def test_hungarian_matches_brute_force():
    """Random rectangular matrices reach the brute-force optimum with an injective matching."""
    rng = np.random.default_rng(42)
    for _ in range(500):
        rows, columns = (int(v) for v in rng.integers(1, 7, size=2))
        similarity = rng.random((rows, columns))
        assignment = hungarian_assign(similarity, -1.0)
        assert len(assignment) == min(rows, columns)
        assert len(set(assignment.values())) == len(assignment)

        matrix = similarity if rows <= columns else similarity.T
        n, m = matrix.shape
        best = max(
            sum(matrix[i, perm[i]] for i in range(n))
            for perm in itertools.permutations(range(m), n)
        )
        total = sum(similarity[row, col] for row, col in assignment.items())
        assert total == pytest.approx(best, abs=1e-9)


def test_hungarian_rejects_non_finite():
    """NaN and infinite similarities raise."""
    with pytest.raises(NumericalError):
        hungarian_assign([[0.5, np.nan]], 0.8)
    with pytest.raises(NumericalError):
        hungarian_assign([[np.inf]], 0.8)


def test_update_tracks_lifecycle():
    """Tracks extend, survive one miss, end after two and new objects get fresh ids."""
    cfg = TrackerConfig(gamma=0.8, beta=2, alpha_iou=0.5)
    red = _candidate([1.0, 0.0, 0.0], _strip(0, 2))
    blue = _candidate([0.0, 1.0, 0.0], _strip(5, 7))
    tracks = update_tracks([], [red, blue], 0, cfg)
    assert [track.track_id for track in tracks] == [0, 1]

    tracks = update_tracks(tracks, [_candidate([0.9, 0.1, 0.0], _strip(0, 2))], 1, cfg)
    assert tracks[0].frames == [0, 1]
    assert (tracks[1].misses, tracks[1].is_active) == (1, True)

    tracks = update_tracks(tracks, [], 2, cfg)
    assert tracks[1].state is TrackState.ENDED
    assert tracks[0].is_active

    tracks = update_tracks(tracks, [_candidate([0.0, 0.0, 1.0], _strip(3, 4))], 3, cfg)
    assert [track.track_id for track in tracks] == [0, 1, 2]
    assert tracks[0].state is TrackState.ENDED
    assert tracks[2].slots == {3: 0}


def test_update_tracks_intermittent():
    """A track missing one frame resumes on the next match."""
    cfg = TrackerConfig(beta=2)
    red = _candidate([1.0, 0.0], _strip(0, 2))
    tracks = update_tracks([], [red], 0, cfg)
    tracks = update_tracks(tracks, [], 1, cfg)
    tracks = update_tracks(tracks, [red], 2, cfg)
    assert len(tracks) == 1
    assert tracks[0].frames == [0, 2]
    assert tracks[0].misses == 0


def test_track_assign_errors():
    """Ended tracks and non-increasing frames are refused."""
    track = _track(0, [[1.0, 0.0]])
    with pytest.raises(ReferringSegmentationError):
        track.assign(0, 1, _candidate([1.0, 0.0]))
    track.state = TrackState.ENDED
    with pytest.raises(ReferringSegmentationError):
        track.assign(5, 1, _candidate([1.0, 0.0]))


def test_score_track_examples():
    """Mean and max of the per-frame cosines."""
    track = _track(0, [[1.0, 0.0], [0.0, 1.0]])
    sentence = np.array([1.0, 0.0])
    assert score_track(track, sentence) == pytest.approx(0.5)
    assert score_track(track, sentence, "max") == pytest.approx(1.0)
    with pytest.raises(ReferringSegmentationError):
        score_track(Track(3), sentence)


def test_select_track_examples():
    """Highest score wins and ties go to the lower id."""
    sentence = np.array([1.0, 0.0])
    weak = _track(0, [[0.0, 1.0]])
    strong = _track(1, [[1.0, 0.1]])
    assert select_track([weak, strong], sentence) is strong
    twin_a = _track(4, [[1.0, 1.0]])
    twin_b = _track(2, [[1.0, 1.0]])
    assert select_track([twin_a, twin_b], sentence) is twin_b
    with pytest.raises(ReferringSegmentationError):
        select_track([], sentence)


def test_select_track_scale_invariance(rng):
    """Scaling the sentence embedding does not change the choice."""
    tracks = [_track(i, rng.normal(size=(3, 4))) for i in range(5)]
    sentence = rng.normal(size=4)
    chosen = select_track(tracks, sentence)
    for scale in (0.01, 3.0, 250.0):
        assert select_track(tracks, scale * sentence) is chosen


def test_temporal_tracker_sequence():
    """Two static objects keep one track each over four frames."""
    tracker = TemporalTracker(TrackerConfig())
    for _ in range(4):
        tracker.update(
            [_candidate([1.0, 0.0], _strip(0, 2)), _candidate([0.0, 1.0], _strip(5, 7))]
        )
    assert [track.frames for track in tracker.tracks] == [[0, 1, 2, 3], [0, 1, 2, 3]]
    track, score = tracker.select(np.array([0.1, 1.0]))
    assert track.track_id == 1
    assert score == pytest.approx(1.0 / np.sqrt(1.01))
