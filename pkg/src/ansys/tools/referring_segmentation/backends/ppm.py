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
"""Provides the backend writing overlays as binary portable pixmaps."""
from pathlib import Path

from PIL import Image
from beartype.typing import List, Optional, Union
import numpy as np

from ansys.tools.referring_segmentation.backends._base import BaseBackend
from ansys.tools.referring_segmentation.errors import ReferringSegmentationError, ShapeMismatchError
from ansys.tools.referring_segmentation.utils.logger import logger


def write_ppm(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a ``(height, width, 3)`` ``uint8`` image as a binary PPM file.

    Raises
    ------
    ShapeMismatchError
        If the image is not an RGB ``uint8`` array.
    ReferringSegmentationError
        If the file cannot be written.

    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ShapeMismatchError(
            f"Expected a (height, width, 3) uint8 image, got {image.shape} {image.dtype}."
        )
    path = Path(path)
    try:
        Image.fromarray(image).save(path, format="PPM")
    except OSError as err:
        raise ReferringSegmentationError(f"Cannot write overlay '{path}': {err}") from err
    logger.debug(f"Wrote overlay '{path}'.")
    return path


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read a PPM file back as a ``(height, width, 3)`` ``uint8`` array."""
    with Image.open(path) as image:
        return np.asarray(image.convert("RGB"))


class PpmBackend(BaseBackend):
    """Collects overlays and writes them as PPM files."""

    def __init__(self) -> None:
        """Initialize the backend."""
        self._images: List[np.ndarray] = []

    @property
    def images(self) -> List[np.ndarray]:
        """Images plotted so far."""
        return self._images

    def plot(self, image: np.ndarray, **plotting_options):
        """Queue an image."""
        self._images.append(np.asarray(image))

    def show(self, screenshot: Optional[str] = None, **options) -> List[Path]:
        """Write the queued images.

        A single image goes to ``screenshot``. Several images go to
        ``<stem>_<index><suffix>`` next to it.
        """
        if screenshot is None:
            raise ReferringSegmentationError("The PPM backend needs an output path.")
        path = Path(screenshot)
        if len(self._images) == 1:
            return [write_ppm(self._images[0], path)]
        return [
            write_ppm(image, path.with_name(f"{path.stem}_{index:03d}{path.suffix}"))
            for index, image in enumerate(self._images)
        ]
