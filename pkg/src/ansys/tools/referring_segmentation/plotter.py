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
"""Module for the overlay plotter."""
from pathlib import Path

from beartype.typing import List, Optional, Sequence, Union
import numpy as np

from ansys.tools.referring_segmentation.backends._base import BaseBackend
from ansys.tools.referring_segmentation.backends.ppm import PpmBackend
from ansys.tools.referring_segmentation.embedding import Frame
from ansys.tools.referring_segmentation.errors import ShapeMismatchError
from ansys.tools.referring_segmentation.masks import BinaryMask, boundary
from ansys.tools.referring_segmentation.utils.color import Color

DEFAULT_ALPHA = 0.5


def compose_overlay(
    frame: Union[Frame, np.ndarray],
    masks: Sequence[BinaryMask],
    referent: Optional[int] = None,
    alpha: float = DEFAULT_ALPHA,
) -> np.ndarray:
    """Blend masks over a frame and outline the referent.

    Mask ``i`` takes the ``i``-th palette color, cycling, blended at ``alpha``
    in list order. The referent boundary is painted opaque.

    Parameters
    ----------
    frame : Frame or numpy.ndarray
        Frame, or a ``(height, width, 3)`` RGB array in ``[0, 1]``.
    masks : Sequence[BinaryMask]
        Masks of the frame size.
    referent : int, default: None
        Index of the mask to outline.
    alpha : float, default: 0.5
        Mask opacity.

    Returns
    -------
    numpy.ndarray
        ``(height, width, 3)`` ``uint8`` image.

    Raises
    ------
    ShapeMismatchError
        If a mask does not match the frame size.

    """
    rgb = frame.rgb if isinstance(frame, Frame) else np.asarray(frame)[..., :3]
    image = np.array(rgb, dtype=np.float64)
    height, width = image.shape[:2]
    palette = Color.mask_palette()
    for index, mask in enumerate(masks):
        if mask.size != (width, height):
            raise ShapeMismatchError(
                f"Mask of size {mask.size} does not match the {width}x{height} frame."
            )
        color = np.array(palette[index % len(palette)].rgb)
        pixels = mask.bitmap
        image[pixels] = (1.0 - alpha) * image[pixels] + alpha * color
    if referent is not None and masks:
        image[boundary(masks[referent])] = Color.OUTLINE.rgb
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


class OverlayPlotter:
    """Composes overlays and hands them to a backend.

    Parameters
    ----------
    backend : BaseBackend, default: None
        Backend to use. The PPM writer is used when ``None``.

    """

    def __init__(self, backend: Optional[BaseBackend] = None) -> None:
        """Initialize the plotter."""
        self._backend = PpmBackend() if backend is None else backend

    @property
    def backend(self) -> BaseBackend:
        """Backend receiving the overlays."""
        return self._backend

    def plot(
        self,
        frame: Union[Frame, np.ndarray],
        masks: Sequence[BinaryMask],
        scores: Optional[Sequence[float]] = None,
        alpha: float = DEFAULT_ALPHA,
        **plotting_options,
    ) -> np.ndarray:
        """Compose an overlay, outlining the best-scoring mask, and plot it."""
        referent = int(np.argmax(scores)) if scores is not None and len(scores) else None
        image = compose_overlay(frame, masks, referent, alpha)
        self._backend.plot(image, **plotting_options)
        return image

    def show(self, screenshot: Optional[Union[str, Path]] = None, **options):
        """Show or write the plotted overlays."""
        target = None if screenshot is None else str(screenshot)
        return self._backend.show(screenshot=target, **options)


def render_overlay(
    frame: Union[Frame, np.ndarray],
    masks: Sequence[BinaryMask],
    scores: Optional[Sequence[float]],
    out_path: Union[str, Path],
    alpha: float = DEFAULT_ALPHA,
) -> Path:
    """Write the overlay of ``masks`` on ``frame`` as a binary PPM file.

    The mask with the highest score is outlined. Without masks the frame is
    written unchanged.
    """
    plotter = OverlayPlotter()
    plotter.plot(frame, masks, scores, alpha)
    written: List[Path] = plotter.show(out_path)
    return written[0]
