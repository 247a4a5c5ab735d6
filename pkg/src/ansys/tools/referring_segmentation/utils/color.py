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
"""Provides an enum with the colors used to draw mask overlays."""

from enum import Enum

from beartype.typing import Tuple


class Color(Enum):
    """Provides an enum with the colors used to draw mask overlays."""

    OUTLINE = "#FFFFFF"
    """Outline color for the referred object."""

    BACKGROUND = "#1A1A1A"
    """Background color of generated scenes."""

    MASK_0 = "#E6194B"
    MASK_1 = "#3CB44B"
    MASK_2 = "#4363D8"
    MASK_3 = "#F58231"
    MASK_4 = "#911EB4"
    MASK_5 = "#42D4F4"
    MASK_6 = "#F032E6"
    MASK_7 = "#BFEF45"

    @property
    def rgb(self) -> Tuple[float, float, float]:
        """Color as an RGB triple in ``[0, 1]``."""
        hex_value = self.value.lstrip("#")
        return tuple(int(hex_value[i : i + 2], 16) / 255.0 for i in (0, 2, 4))

    @classmethod
    def mask_palette(cls) -> Tuple["Color", ...]:
        """Colors cycled through when overlaying several masks."""
        return tuple(color for color in cls if color.name.startswith("MASK_"))
