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
"""Provides the segmentation metrics and the evaluation report."""
from dataclasses import dataclass, field
import itertools
import json
from pathlib import Path

from beartype.typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union
import numpy as np

from ansys.tools.referring_segmentation.errors import NumericalError
from ansys.tools.referring_segmentation.masks import BinaryMask, intersection_union
from ansys.tools.referring_segmentation.numerics import cosine_similarity

PRECISION_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)
MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
ACCURACY_IOU = 0.5


@dataclass(frozen=True)
class SampleResult:
    """Pixel counts of one predicted mask against its annotation.

    Attributes
    ----------
    intersection : int
        Pixels in both masks.
    union : int
        Pixels in either mask.
    sample_id : int
        Query sample the frame belongs to, ``-1`` when unknown.
    frame : int
        Frame index, ``-1`` when unknown.
    family : str
        Template family of the query.

    """

    intersection: int
    union: int
    sample_id: int = -1
    frame: int = -1
    family: str = ""

    def __post_init__(self):
        """Check the count invariants."""
        if not 0 <= self.intersection <= self.union:
            raise NumericalError(
                f"Invalid counts: intersection {self.intersection}, union {self.union}."
            )

    @property
    def iou(self) -> float:
        """Intersection over union, 0 for an empty union."""
        return self.intersection / self.union if self.union else 0.0

    @classmethod
    def from_masks(
        cls,
        prediction: Optional[BinaryMask],
        target: BinaryMask,
        sample_id: int = -1,
        frame: int = -1,
        family: str = "",
    ) -> "SampleResult":
        """Result of a prediction. A missing prediction scores zero over the target area."""
        if prediction is None:
            return cls(0, target.area, sample_id, frame, family)
        intersection, union = intersection_union(prediction, target)
        return cls(intersection, union, sample_id, frame, family)


def _require(results: Sequence[SampleResult]) -> None:
    if not results:
        raise NumericalError("Metrics need at least one result.")


def overall_iou(results: Sequence[SampleResult]) -> float:
    """Total intersection over total union.

    Raises
    ------
    NumericalError
        If there is no result or every union is empty.

    """
    _require(results)
    union = sum(result.union for result in results)
    if union == 0:
        raise NumericalError("Overall IoU is undefined when every union is empty.")
    return sum(result.intersection for result in results) / union


def mean_iou(results: Sequence[SampleResult]) -> float:
    """Average of the per-sample IoUs."""
    _require(results)
    return float(np.mean([result.iou for result in results]))


def precision_at_k(results: Sequence[SampleResult], k: float) -> float:
    """Fraction of results with an IoU strictly above ``k``."""
    if not 0.0 < k < 1.0:
        raise NumericalError(f"Threshold must lie in (0, 1), got {k}.")
    _require(results)
    return sum(result.iou > k for result in results) / len(results)


def map_50_95(results: Sequence[SampleResult]) -> float:
    """Mean of :func:`precision_at_k` over the thresholds 0.50, 0.55, ..., 0.95."""
    return float(np.mean([precision_at_k(results, k) for k in MAP_THRESHOLDS]))


def referent_accuracy(results: Sequence[SampleResult]) -> float:
    """Fraction of frames whose prediction reaches an IoU of 0.5."""
    _require(results)
    return sum(result.iou >= ACCURACY_IOU for result in results) / len(results)


def track_accuracy(results: Sequence[SampleResult]) -> float:
    """Fraction of samples whose every annotated frame reaches an IoU of 0.5."""
    _require(results)
    by_sample: Dict[int, bool] = {}
    for result in results:
        by_sample[result.sample_id] = by_sample.get(result.sample_id, True) and (
            result.iou >= ACCURACY_IOU
        )
    return sum(by_sample.values()) / len(by_sample)


def summarize(results: Sequence[SampleResult]) -> Dict[str, float]:
    """Every metric of a result list, by name."""
    metrics = {"overall_iou": overall_iou(results), "mean_iou": mean_iou(results)}
    for k in PRECISION_THRESHOLDS:
        metrics[f"precision@{k:.1f}"] = precision_at_k(results, k)
    metrics["map_50_95"] = map_50_95(results)
    metrics["referent_accuracy"] = referent_accuracy(results)
    metrics["track_accuracy"] = track_accuracy(results)
    return metrics


def embedding_separation(
    videos: Iterable[Sequence[Mapping[int, np.ndarray]]]
) -> Tuple[float, float]:
    """Mean cosine between embeddings of the same object and of different objects.

    Parameters
    ----------
    videos : Iterable[Sequence[Mapping[int, numpy.ndarray]]]
        Per video, per frame, the embedding of each object id.

    Returns
    -------
    Tuple[float, float]
        Intra-object mean over pairs of distinct frames and inter-object mean
        over all pairs of distinct objects. ``nan`` when no pair exists.

    """
    intra: List[float] = []
    inter: List[float] = []
    for frames in videos:
        entries = [
            (frame_index, object_id, embedding)
            for frame_index, embeddings in enumerate(frames)
            for object_id, embedding in embeddings.items()
        ]
        for (fa, oa, ea), (fb, ob, eb) in itertools.combinations(entries, 2):
            if oa == ob and fa != fb:
                intra.append(cosine_similarity(ea, eb))
            elif oa != ob:
                inter.append(cosine_similarity(ea, eb))
    intra_mean = float(np.mean(intra)) if intra else float("nan")
    inter_mean = float(np.mean(inter)) if inter else float("nan")
    return intra_mean, inter_mean


def _json_values(values: Mapping[str, float]) -> Dict[str, Optional[float]]:
    return {key: float(value) if np.isfinite(value) else None for key, value in values.items()}


@dataclass
class EvaluationReport:
    """Metrics overall and per template family, plus diagnostics."""

    metrics: Dict[str, float]
    families: Dict[str, Dict[str, float]] = field(default_factory=dict)
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_results(
        cls, results: Sequence[SampleResult], diagnostics: Optional[Mapping[str, float]] = None
    ) -> "EvaluationReport":
        """Summarize a result list overall and per family."""
        families: Dict[str, List[SampleResult]] = {}
        for result in results:
            families.setdefault(result.family, []).append(result)
        return cls(
            metrics=summarize(results),
            families={name: summarize(group) for name, group in sorted(families.items()) if name},
            diagnostics=dict(diagnostics or {}),
        )

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation. Undefined values such as ``nan`` become ``None``."""
        return {
            "metrics": _json_values(self.metrics),
            "families": {name: _json_values(values) for name, values in self.families.items()},
            "diagnostics": _json_values(self.diagnostics),
        }

    def key_values(self) -> List[str]:
        """``key=value`` lines, one per metric, in a stable order."""
        lines = [f"{key}={value:.6f}" for key, value in sorted(self.metrics.items())]
        for family, metrics in sorted(self.families.items()):
            lines.extend(f"{family}.{key}={value:.6f}" for key, value in sorted(metrics.items()))
        lines.extend(
            f"diagnostics.{key}={value:.6f}" for key, value in sorted(self.diagnostics.items())
        )
        return lines

    def write(self, directory: Union[str, Path]) -> Tuple[Path, Path]:
        """Write ``report.json`` and ``metrics.txt`` into ``directory``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        report = directory / "report.json"
        report.write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"
        )
        metrics = directory / "metrics.txt"
        metrics.write_text("\n".join(self.key_values()) + "\n")
        return report, metrics
