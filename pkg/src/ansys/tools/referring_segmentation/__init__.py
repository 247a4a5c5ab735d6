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
"""Referring segmentation of objects in short videos by embedding retrieval."""
import importlib.metadata as importlib_metadata
import os

__version__ = importlib_metadata.version(__name__.replace(".", "-"))

TESTING_MODE: bool = os.environ.get("REFSEG_TESTMODE", "false").lower() == "true"
"""Whether the library runs under the test suite, used to keep viewers off screen."""

from ansys.tools.referring_segmentation.errors import (  # noqa: F401, E402
    ChecksumError,
    ConfigurationError,
    DatasetFormatError,
    EmptyMaskError,
    NumericalError,
    ReferringSegmentationError,
    ShapeMismatchError,
)
from ansys.tools.referring_segmentation.masks import BinaryMask  # noqa: F401, E402
from ansys.tools.referring_segmentation.model import ReferringModel  # noqa: F401, E402
from ansys.tools.referring_segmentation.plotter import (  # noqa: F401, E402
    OverlayPlotter,
    render_overlay,
)
from ansys.tools.referring_segmentation.utils.color import Color  # noqa: F401, E402
from ansys.tools.referring_segmentation.utils.config import (  # noqa: F401, E402
    Settings,
    load_settings,
)
