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
"""Provides the exceptions raised by the referring segmentation toolkit."""
from pathlib import Path

from beartype.typing import Union


class ReferringSegmentationError(Exception):
    """Base class for all the errors raised by this library."""


class NumericalError(ReferringSegmentationError, ValueError):
    """Raised on empty, zero-norm or non-finite numerical inputs and results."""


class ShapeMismatchError(ReferringSegmentationError, ValueError):
    """Raised when operands do not conform or a forward tape does not match its parameters."""


class EmptyMaskError(ReferringSegmentationError, ValueError):
    """Raised when an operation needs at least one foreground pixel."""


class ConfigurationError(ReferringSegmentationError, ValueError):
    """Raised on invalid or infeasible configuration values."""


class DatasetFormatError(ReferringSegmentationError, ValueError):
    """Raised when a dataset, checkpoint or prediction file cannot be decoded."""


class ChecksumError(DatasetFormatError):
    """Raised when a stored block is truncated or fails its CRC-32 check.

    Parameters
    ----------
    path : str or Path
        File holding the corrupted block.
    offset : int
        Byte offset of the start of the corrupted block.
    reason : str
        Short description of the failure.

    """

    def __init__(self, path: Union[str, Path], offset: int, reason: str) -> None:
        """Initialize the error with the file and offset of the faulty block."""
        self.path = Path(path)
        self.offset = offset
        super().__init__(f"{reason} in '{self.path}' at byte offset {offset}")
