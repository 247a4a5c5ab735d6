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
"""Provides the interactive overlay viewer based on PyVista."""
from beartype.typing import Optional
import numpy as np
import pyvista as pv

import ansys.tools.referring_segmentation as refseg
from ansys.tools.referring_segmentation.backends._base import BaseBackend


class PyVistaBackend(BaseBackend):
    """Shows overlays as textured planes in a PyVista window.

    Several images are laid side by side. In testing mode the window is off screen.

    Parameters
    ----------
    scene : ~pyvista.Plotter, default: None
        Scene to draw into. If passed, ``off_screen`` needs to be set beforehand.

    """

    def __init__(self, scene: Optional[pv.Plotter] = None, **plotter_kwargs) -> None:
        """Initialize the scene."""
        if scene is None:
            scene = pv.Plotter(off_screen=refseg.TESTING_MODE, **plotter_kwargs)
        self._scene = scene
        self._scene.set_background("black")
        self._offset = 0.0

    @property
    def scene(self) -> pv.Plotter:
        """Rendered scene object."""
        return self._scene

    def plot(self, image: np.ndarray, **plotting_options):
        """Add an image as an RGB-colored grid to the right of the previous ones."""
        height, width = image.shape[:2]
        grid = pv.ImageData(dimensions=(width, height, 1), origin=(self._offset, 0.0, 0.0))
        grid.point_data["rgb"] = np.ascontiguousarray(image[::-1]).reshape(-1, 3)
        self._scene.add_mesh(grid, scalars="rgb", rgb=True, **plotting_options)
        self._offset += width + 2

    def show(self, screenshot: Optional[str] = None, **options):
        """Show the window, or render off screen when a screenshot path is given."""
        self._scene.view_xy()
        if screenshot is not None:
            self._scene.off_screen = True
        return self._scene.show(screenshot=screenshot, **options)
