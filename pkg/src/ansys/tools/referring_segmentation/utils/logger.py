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
"""Provides the singleton helper class for the logger."""

# logger from https://gist.github.com/huklee/cea20761dd05da7c39120084f52fcc7c
import datetime
import logging
from pathlib import Path

from beartype.typing import Any, Dict, Mapping, Optional, TextIO, Union


class SingletonType(type):
    """Provides the singleton helper class for the logger."""

    _instances = {}

    def __call__(cls, *args, **kwargs):
        """Call to redirect new instances to the singleton instance."""
        if cls not in cls._instances:
            cls._instances[cls] = super(SingletonType, cls).__call__(*args, **kwargs)
        return cls._instances[cls]


class RefSegLogger(object, metaclass=SingletonType):
    """Provides the singleton logger for the referring segmentation toolkit.

    Parameters
    ----------
    level : int, default: logging.WARNING
        Output level of the logger.
    logger_name : str, default: "RefSegLogger"
        Name of the underlying ``logging.Logger``.

    """

    _logger = None

    def __init__(self, level: int = logging.WARNING, logger_name: str = "RefSegLogger"):
        """Initialize the logger."""
        self._logger = logging.getLogger(logger_name)
        self._logger.setLevel(level)
        self._formatter = logging.Formatter(
            "%(asctime)s \t [%(levelname)s | %(filename)s:%(lineno)s] > %(message)s"
        )
        self._stream_handler: Optional[logging.StreamHandler] = None
        self._file_handlers: Dict[Path, logging.FileHandler] = {}

    def get_logger(self) -> logging.Logger:
        """Get the logger.

        Returns
        -------
        Logger
            Logger.

        """
        return self._logger

    def set_level(self, level: int):
        """Set the logger output level.

        Parameters
        ----------
        level : int
            Output level of the logger.

        """
        self._logger.setLevel(level=level)

    def enable_output(self, stream: Optional[TextIO] = None):
        """Enable logger output to a given stream.

        If a stream is not specified, ``sys.stderr`` is used. Enabling the output
        again replaces the previous stream.

        Parameters
        ----------
        stream : TextIO, default: ``sys.stderr``
            Stream to output the log output to.

        """
        if self._stream_handler is not None:
            self._logger.removeHandler(self._stream_handler)
        self._stream_handler = logging.StreamHandler(stream)
        self._stream_handler.setFormatter(self._formatter)
        self._logger.addHandler(self._stream_handler)

    def add_file_handler(self, logs_dir: Union[str, Path] = "./.log") -> Path:
        """Save logs to a dated file in addition to printing them to the standard output.

        Runs sharing a directory on the same day append to the same file through
        a single handler.

        Parameters
        ----------
        logs_dir : str or Path, default: ``"./.log"``
            Directory of the logs.

        Returns
        -------
        Path
            Log file.

        """
        now = datetime.datetime.now()
        logs_dir = Path(logs_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)
        log_path = (logs_dir / f"log_{now.strftime('%Y-%m-%d')}.log").resolve()
        if log_path not in self._file_handlers:
            file_handler = logging.FileHandler(log_path)
            file_handler.setFormatter(self._formatter)
            self._logger.addHandler(file_handler)
            self._file_handlers[log_path] = file_handler
        return log_path

    def close_file_handlers(self):
        """Detach and close every file handler."""
        for handler in self._file_handlers.values():
            self._logger.removeHandler(handler)
            handler.close()
        self._file_handlers.clear()

    def log_settings(self, command: str, settings: Any):
        """Log the settings of a run at ``INFO`` level, one line per section.

        Parameters
        ----------
        command : str
            Name of the run, such as the ``refseg`` subcommand.
        settings : Settings
            Settings of the run. Anything with a ``to_dict`` method returning
            section mappings is accepted.

        """
        sections: Mapping[str, Mapping[str, Any]] = settings.to_dict()
        for section, values in sections.items():
            fields = ", ".join(f"{key}={value}" for key, value in sorted(values.items()))
            self._logger.info(f"{command} [{section}] {fields}")


logger = RefSegLogger().get_logger()
