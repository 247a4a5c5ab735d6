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
"""Module for the backend base class."""
from abc import ABC, abstractmethod

from beartype.typing import Iterable, Optional
import numpy as np


class BaseBackend(ABC):
    """Base class for overlay backends.

    Backends receive composed ``(height, width, 3)`` ``uint8`` images.
    """

    @abstractmethod
    def plot(self, image: np.ndarray, **plotting_options):
        """Plot the specified image."""
        raise NotImplementedError("plot method must be implemented")

    def plot_iter(self, images: Iterable[np.ndarray], **plotting_options):
        """Plot the elements of an iterable."""
        for image in images:
            self.plot(image, **plotting_options)

    @abstractmethod
    def show(self, screenshot: Optional[str] = None, **options):
        """Show or write the plotted images."""
        raise NotImplementedError("show method must be implemented")
