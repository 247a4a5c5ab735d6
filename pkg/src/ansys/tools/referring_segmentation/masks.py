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
"""Provides the run-length encoded binary mask and its geometry."""
from dataclasses import dataclass

from beartype.typing import Dict, List, NamedTuple, Sequence, Tuple
import numpy as np

from ansys.tools.referring_segmentation.errors import (
    DatasetFormatError,
    EmptyMaskError,
    ShapeMismatchError,
)


def _encode(flat: np.ndarray) -> Tuple[int, ...]:
    """Alternating background/foreground run lengths, starting with background."""
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return tuple(int(run) for run in runs)


class BinaryMask:
    """Per-frame object bitmap stored as a row-major run-length encoding.

    The first run counts background pixels and may be zero. Runs are kept in
    canonical form, so two masks are equal exactly when their pixels are.

    Parameters
    ----------
    width : int
        Frame width in pixels.
    height : int
        Frame height in pixels.
    runs : Sequence[int]
        Alternating background/foreground run lengths summing to ``width * height``.

    Raises
    ------
    DatasetFormatError
        If a run is negative or the runs do not cover the frame exactly.

    """

    __slots__ = ("_width", "_height", "_runs", "_bitmap")

    def __init__(self, width: int, height: int, runs: Sequence[int]) -> None:
        """Initialize and canonicalize the mask."""
        if width < 1 or height < 1:
            raise DatasetFormatError(f"Invalid mask size {width}x{height}.")
        runs = np.asarray(runs, dtype=np.int64)
        if runs.ndim != 1 or np.any(runs < 0):
            raise DatasetFormatError("Mask runs must be a flat sequence of non-negative lengths.")
        if int(runs.sum()) != width * height:
            raise DatasetFormatError(
                f"Mask runs cover {int(runs.sum())} pixels, expected {width * height}."
            )
        values = np.arange(runs.size) % 2 == 1
        flat = np.repeat(values, runs)
        self._width = int(width)
        self._height = int(height)
        self._runs = _encode(flat)
        self._bitmap = flat.reshape(self._height, self._width)
        self._bitmap.setflags(write=False)

    @classmethod
    def from_bitmap(cls, bitmap) -> "BinaryMask":
        """Create a mask from a ``(height, width)`` array of truthy values."""
        bitmap = np.asarray(bitmap).astype(bool)
        if bitmap.ndim != 2:
            raise ShapeMismatchError(f"Bitmap must be two-dimensional, got shape {bitmap.shape}.")
        height, width = bitmap.shape
        return cls(width, height, _encode(bitmap.ravel()))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        """Mask without foreground pixels."""
        return cls(width, height, [width * height])

    @property
    def width(self) -> int:
        """Frame width in pixels."""
        return self._width

    @property
    def height(self) -> int:
        """Frame height in pixels."""
        return self._height

    @property
    def size(self) -> Tuple[int, int]:
        """``(width, height)`` of the frame."""
        return self._width, self._height

    @property
    def runs(self) -> Tuple[int, ...]:
        """Canonical run lengths."""
        return self._runs

    @property
    def bitmap(self) -> np.ndarray:
        """Read-only boolean ``(height, width)`` array."""
        return self._bitmap

    @property
    def area(self) -> int:
        """Number of foreground pixels."""
        return int(sum(self._runs[1::2]))

    @property
    def is_empty(self) -> bool:
        """Whether the mask has no foreground pixel."""
        return self.area == 0

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation."""
        return {"width": self._width, "height": self._height, "runs": list(self._runs)}

    @classmethod
    def from_dict(cls, values: Dict[str, object]) -> "BinaryMask":
        """Inverse of :meth:`to_dict`."""
        try:
            return cls(int(values["width"]), int(values["height"]), values["runs"])
        except (KeyError, TypeError, ValueError) as err:
            raise DatasetFormatError(f"Malformed mask record: {err}") from err

    def __eq__(self, other: object) -> bool:
        """Pixel-wise equality."""
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.size == other.size and self._runs == other._runs

    def __hash__(self) -> int:
        """Hash consistent with equality."""
        return hash((self._width, self._height, self._runs))

    def __repr__(self) -> str:
        """Short description."""
        return f"BinaryMask({self._width}x{self._height}, area={self.area})"


def _check_same_size(a: BinaryMask, b: BinaryMask) -> None:
    if a.size != b.size:
        raise ShapeMismatchError(f"Mask sizes differ: {a.size} and {b.size}.")


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union of two masks of the same frame size.

    Two empty masks have an IoU of 0.
    """
    _check_same_size(a, b)
    union = np.count_nonzero(a.bitmap | b.bitmap)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bitmap & b.bitmap) / union


def intersection_union(prediction: BinaryMask, target: BinaryMask) -> Tuple[int, int]:
    """Pixel counts of the intersection and of the union of two masks."""
    _check_same_size(prediction, target)
    return (
        int(np.count_nonzero(prediction.bitmap & target.bitmap)),
        int(np.count_nonzero(prediction.bitmap | target.bitmap)),
    )


class BoundingBox(NamedTuple):
    """Normalized tight box of a mask."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x_c: float
    y_c: float
    w: float
    h: float


def bounding_box(mask: BinaryMask) -> BoundingBox:
    """Tight box of the foreground, normalized by ``(width - 1, height - 1)``.

    Raises
    ------
    EmptyMaskError
        If the mask has no foreground pixel.

    """
    rows = np.flatnonzero(mask.bitmap.any(axis=1))
    cols = np.flatnonzero(mask.bitmap.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("The bounding box of an empty mask is undefined.")
    sx = float(max(mask.width - 1, 1))
    sy = float(max(mask.height - 1, 1))
    x0, x1 = int(cols[0]), int(cols[-1])
    y0, y1 = int(rows[0]), int(rows[-1])
    return BoundingBox(
        x_min=x0 / sx,
        y_min=y0 / sy,
        x_max=x1 / sx,
        y_max=y1 / sy,
        x_c=(x0 + x1) / (2.0 * sx),
        y_c=(y0 + y1) / (2.0 * sy),
        w=(x1 - x0) / sx,
        h=(y1 - y0) / sy,
    )


@dataclass(frozen=True)
class PositionalDescriptor:
    """Box geometry plus relative rank indices of one candidate, all in ``[0, 1]``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    x_c: float
    y_c: float
    w: float
    h: float
    r_x: float
    r_y: float

    def as_array(self) -> np.ndarray:
        """The ten values as a vector, in field order."""
        return np.array(
            [
                self.x_min,
                self.y_min,
                self.x_max,
                self.y_max,
                self.x_c,
                self.y_c,
                self.w,
                self.h,
                self.r_x,
                self.r_y,
            ],
            dtype=np.float64,
        )


DESCRIPTOR_DIM = 10


def _ranks(values: Sequence[float]) -> np.ndarray:
    """0-based ascending ranks, ties broken by position."""
    order = np.argsort(np.asarray(values, dtype=np.float64), kind="stable")
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(len(values))
    return ranks


def positional_descriptors(masks: Sequence[BinaryMask]) -> List[PositionalDescriptor]:
    """Descriptors of all the candidates of one frame.

    The rank indices sort the box centers of every candidate in ascending order
    and divide the rank by ``max(N - 1, 1)``.

    Raises
    ------
    EmptyMaskError
        If the list is empty or a mask has no foreground.
    ShapeMismatchError
        If the masks come from frames of different sizes.

    """
    if not masks:
        raise EmptyMaskError("Positional descriptors need at least one candidate.")
    for mask in masks[1:]:
        _check_same_size(masks[0], mask)
    boxes = [bounding_box(mask) for mask in masks]
    divisor = float(max(len(boxes) - 1, 1))
    rank_x = _ranks([box.x_c for box in boxes])
    rank_y = _ranks([box.y_c for box in boxes])
    return [
        PositionalDescriptor(*box, r_x=rank_x[i] / divisor, r_y=rank_y[i] / divisor)
        for i, box in enumerate(boxes)
    ]


def horizontal_flip(mask: BinaryMask) -> BinaryMask:
    """Mirror a mask around the vertical center line of its frame."""
    return BinaryMask.from_bitmap(mask.bitmap[:, ::-1])


def _shift_or(bitmap: np.ndarray, fill: bool) -> np.ndarray:
    """4-neighborhood OR (``fill=False``) or AND (``fill=True``) of a bitmap."""
    padded = np.pad(bitmap, 1, mode="constant", constant_values=fill)
    neighbors = (padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:])
    if fill:
        return bitmap & np.logical_and.reduce(neighbors)
    return bitmap | np.logical_or.reduce(neighbors)


def dilate(mask: BinaryMask) -> BinaryMask:
    """Grow a mask by one pixel in the 4-neighborhood."""
    return BinaryMask.from_bitmap(_shift_or(mask.bitmap, fill=False))


def erode(mask: BinaryMask) -> BinaryMask:
    """Shrink a mask by one pixel in the 4-neighborhood. Frame borders do not erode."""
    return BinaryMask.from_bitmap(_shift_or(mask.bitmap, fill=True))


def boundary(mask: BinaryMask) -> np.ndarray:
    """Boolean bitmap of the foreground pixels with a background 4-neighbor."""
    return mask.bitmap & ~erode(mask).bitmap
