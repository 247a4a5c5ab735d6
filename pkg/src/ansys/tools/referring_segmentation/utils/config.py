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
"""Provides the configuration dataclasses and the YAML settings loader."""
import dataclasses
from pathlib import Path
import typing

from beartype import BeartypeConf, beartype
from beartype.roar import BeartypeCallHintViolation
from beartype.typing import Any, Dict, Optional, Tuple, Union
import yaml

from ansys.tools.referring_segmentation.errors import ConfigurationError

_validated = beartype(conf=BeartypeConf(is_pep484_tower=True))

POSITIONAL_ENCODINGS = ("none", "absolute", "relative", "full")
RELATION_MODES = ("none", "vanilla", "text_guided")
TRACK_SCORES = ("mean", "max")
QUERY_FAMILIES = ("attribute", "position", "relation", "motion")


@_validated
@dataclasses.dataclass(frozen=True)
class EncoderConfig:
    """Language encoder hyperparameters.

    Parameters
    ----------
    embedding_dim : int, default: 32
        Width of the learned word embedding table.
    hidden_dim : int, default: 32
        Width of each recurrent direction. Hidden states have ``2 * hidden_dim`` entries.
    max_length : int, default: 20
        Sentence length after truncation and padding.
    swap_pairs : Tuple[str, ...], default: ("left:right",)
        Direction words exchanged by flip augmentation, as ``"a:b"`` pairs.

    """

    embedding_dim: int = 32
    hidden_dim: int = 32
    max_length: int = 20
    swap_pairs: Tuple[str, ...] = ("left:right",)

    def __post_init__(self):
        """Validate the values."""
        if min(self.embedding_dim, self.hidden_dim, self.max_length) < 1:
            raise ConfigurationError("Encoder dimensions and max_length must be positive.")
        for pair in self.swap_pairs:
            if len(pair.split(":")) != 2:
                raise ConfigurationError(f"Swap pair '{pair}' is not of the form 'a:b'.")

    @property
    def swap_table(self) -> Dict[str, str]:
        """Symmetric word-to-word swap table."""
        table = {}
        for pair in self.swap_pairs:
            first, second = (word.strip().lower() for word in pair.split(":"))
            table[first] = second
            table[second] = first
        return table


@_validated
@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Object embedding hyperparameters and ablation switches.

    Parameters
    ----------
    input_channels : int, default: 5
        Per-pixel input channels of a frame.
    feature_dim : int, default: 32
        Backbone feature width.
    embedding_dim : int, default: 32
        Shared multimodal embedding width.
    mlp_layers : int, default: 2
        Depth of the pooling MLPs. Hidden layers have ``embedding_dim`` units.
    positional_encoding : str, default: "full"
        Descriptor entries injected into object features: ``"none"``, ``"absolute"``
        (box geometry only), ``"relative"`` (rank indices only) or ``"full"``.
    relation : str, default: "text_guided"
        Intra-frame relation module: ``"none"``, ``"vanilla"`` self-attention or
        ``"text_guided"`` attention.

    """

    input_channels: int = 5
    feature_dim: int = 32
    embedding_dim: int = 32
    mlp_layers: int = 2
    positional_encoding: str = "full"
    relation: str = "text_guided"

    def __post_init__(self):
        """Validate the values."""
        if min(self.input_channels, self.feature_dim, self.embedding_dim, self.mlp_layers) < 1:
            raise ConfigurationError("Model dimensions and mlp_layers must be positive.")
        if self.positional_encoding not in POSITIONAL_ENCODINGS:
            raise ConfigurationError(
                f"positional_encoding must be one of {POSITIONAL_ENCODINGS}, "
                f"got '{self.positional_encoding}'."
            )
        if self.relation not in RELATION_MODES:
            raise ConfigurationError(
                f"relation must be one of {RELATION_MODES}, got '{self.relation}'."
            )


@_validated
@dataclasses.dataclass(frozen=True)
class TrackerConfig:
    """Cross-frame association settings.

    Parameters
    ----------
    gamma : float, default: 0.8
        Association acceptance threshold on the fused similarity.
    beta : int, default: 2
        Consecutive unmatched rounds after which an active track ends.
    alpha_iou : float, default: 0.5
        Weight of the mask IoU term in the fused similarity.
    track_score : str, default: "mean"
        Track confidence: ``"mean"`` or ``"max"`` of the per-frame scores.
    use_temporal : bool, default: True
        Whether retrieval goes through tracks. When ``False`` each frame picks
        its best candidate independently.

    """

    gamma: float = 0.8
    beta: int = 2
    alpha_iou: float = 0.5
    track_score: str = "mean"
    use_temporal: bool = True

    def __post_init__(self):
        """Validate the values."""
        if not 0.0 < self.gamma <= 2.0:
            raise ConfigurationError(f"gamma must lie in (0, 2], got {self.gamma}.")
        if self.beta < 1:
            raise ConfigurationError(f"beta must be at least 1, got {self.beta}.")
        if self.alpha_iou < 0.0:
            raise ConfigurationError(f"alpha_iou must be non-negative, got {self.alpha_iou}.")
        if self.track_score not in TRACK_SCORES:
            raise ConfigurationError(
                f"track_score must be one of {TRACK_SCORES}, got '{self.track_score}'."
            )


@_validated
@dataclasses.dataclass(frozen=True)
class TrainingConfig:
    """Optimization settings.

    Parameters
    ----------
    learning_rate : float, default: 1e-4
        Initial Adam learning rate.
    batch_size : int, default: 16
        Query samples per optimizer step.
    epochs : int, default: 30
        Passes over the training split.
    tau : float, default: 0.1
        Temperature of the contrastive softmax.
    flip_prob : float, default: 0.5
        Probability of the horizontal flip augmentation per sample.
    patience : int, default: 2
        Epochs without improvement before the learning rate is reduced.
    factor : float, default: 0.1
        Learning-rate reduction factor.
    threshold : float, default: 1e-6
        Minimum loss decrease that counts as an improvement.
    gt_iou_threshold : float, default: 0.5
        Minimum IoU linking the annotated referent to a candidate.
    init_scale : float, default: 0.1
        Half-width of the uniform parameter initialization.
    seed : int, default: 0
        Seed of initialization, shuffling and augmentation.

    """

    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 30
    tau: float = 0.1
    flip_prob: float = 0.5
    patience: int = 2
    factor: float = 0.1
    threshold: float = 1e-6
    gt_iou_threshold: float = 0.5
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        """Validate the values."""
        if self.learning_rate < 0.0:
            raise ConfigurationError("learning_rate must be non-negative.")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ConfigurationError("batch_size and patience must be positive, epochs >= 0.")
        if self.tau <= 0.0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}.")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError(f"flip_prob must lie in [0, 1], got {self.flip_prob}.")
        if not 0.0 < self.factor < 1.0:
            raise ConfigurationError(f"factor must lie in (0, 1), got {self.factor}.")


@_validated
@dataclasses.dataclass(frozen=True)
class GeneratorConfig:
    """Synthetic dataset settings.

    Parameters
    ----------
    width, height : int, default: 64
        Frame size in pixels.
    frames : int, default: 5
        Frames per scene.
    min_objects, max_objects : int, default: 2, 5
        Bounds on the number of objects per scene.
    scenes : int, default: 250
        Total number of scenes.
    test_fraction : float, default: 0.2
        Fraction of scenes assigned to the test split.
    queries_per_scene : int, default: 3
        Maximum number of query samples generated per scene.
    families : Tuple[str, ...]
        Query template families to draw from.
    occlusion : bool, default: False
        Whether objects may overlap. Later objects are drawn on top.
    candidate_noise : float, default: 0.0
        Probability that a candidate mask is eroded or dilated by one pixel.
    drop_prob : float, default: 0.0
        Probability that a candidate is missing from a frame.
    min_size, max_size : int, default: 8, 14
        Bounds on the object size in pixels.
    max_speed : int, default: 3
        Largest per-frame displacement along each axis in pixels.

    """

    width: int = 64
    height: int = 64
    frames: int = 5
    min_objects: int = 2
    max_objects: int = 5
    scenes: int = 250
    test_fraction: float = 0.2
    queries_per_scene: int = 3
    families: Tuple[str, ...] = QUERY_FAMILIES
    occlusion: bool = False
    candidate_noise: float = 0.0
    drop_prob: float = 0.0
    min_size: int = 8
    max_size: int = 14
    max_speed: int = 3

    def __post_init__(self):
        """Validate the values."""
        if self.frames < 1 or self.scenes < 1 or self.queries_per_scene < 1:
            raise ConfigurationError("frames, scenes and queries_per_scene must be positive.")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigurationError("Object counts must satisfy 1 <= min_objects <= max_objects.")
        if not 2 <= self.min_size <= self.max_size < min(self.width, self.height):
            raise ConfigurationError(
                "Object sizes must satisfy 2 <= min_size <= max_size < frame size."
            )
        unknown = set(self.families) - set(QUERY_FAMILIES)
        if unknown or not self.families:
            raise ConfigurationError(f"Unknown or empty query families: {sorted(unknown)}.")
        for name in ("test_fraction", "candidate_noise", "drop_prob"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1).")
        if self.max_speed < 0:
            raise ConfigurationError("max_speed must be non-negative.")


@_validated
@dataclasses.dataclass(frozen=True)
class RuntimeConfig:
    """Process-level settings.

    Parameters
    ----------
    workers : int, default: 4
        Upper bound on the worker threads used for generation and evaluation.

    """

    workers: int = 4

    def __post_init__(self):
        """Validate the values."""
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1.")


_SECTIONS = {
    "encoder": EncoderConfig,
    "model": ModelConfig,
    "tracker": TrackerConfig,
    "training": TrainingConfig,
    "generator": GeneratorConfig,
    "runtime": RuntimeConfig,
}


@dataclasses.dataclass(frozen=True)
class Settings:
    """All the configuration sections of a run."""

    encoder: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)
    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    tracker: TrackerConfig = dataclasses.field(default_factory=TrackerConfig)
    training: TrainingConfig = dataclasses.field(default_factory=TrainingConfig)
    generator: GeneratorConfig = dataclasses.field(default_factory=GeneratorConfig)
    runtime: RuntimeConfig = dataclasses.field(default_factory=RuntimeConfig)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Plain nested dictionary of every value, tuples as lists."""
        return {
            name: {
                key: list(value) if isinstance(value, tuple) else value
                for key, value in dataclasses.asdict(getattr(self, name)).items()
            }
            for name in _SECTIONS
        }

    @classmethod
    def from_dict(cls, values: Dict[str, Dict[str, Any]]) -> "Settings":
        """Build the settings from the output of :meth:`to_dict`.

        Missing sections or keys keep their defaults.
        """
        sections = {}
        for name, section_cls in _SECTIONS.items():
            raw = dict(values.get(name) or {})
            _check_keys(name, section_cls, raw)
            hints = typing.get_type_hints(section_cls)
            converted = {}
            for key, value in raw.items():
                if hints[key] == Tuple[str, ...] and isinstance(value, list):
                    value = tuple(value)
                converted[key] = value
            try:
                sections[name] = section_cls(**converted)
            except BeartypeCallHintViolation as err:
                raise ConfigurationError(f"Invalid value type in section [{name}]: {err}") from err
        return cls(**sections)

    def replace(self, **sections) -> "Settings":
        """Copy of the settings with some sections swapped."""
        return dataclasses.replace(self, **sections)


def _check_keys(section: str, section_cls: type, raw: Dict[str, Any]) -> None:
    known = {field.name for field in dataclasses.fields(section_cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"Unknown keys in section [{section}]: {sorted(unknown)}.")


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """Load settings from a YAML file with one mapping per section.

    Parameters
    ----------
    path : str or Path, default: None
        Configuration file. When ``None`` the defaults are returned.

    Returns
    -------
    Settings
        Parsed and validated settings.

    Raises
    ------
    ConfigurationError
        If the file is missing, has an unknown section or key, or a value is invalid.

    Examples
    --------
    A file that lowers the tracker threshold and turns on candidate noise:

    .. code:: yaml

        tracker:
          gamma: 0.7
        generator:
          candidate_noise: 0.2
          families: [attribute, motion]

    """
    if path is None:
        return Settings()
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Configuration file '{path}' does not exist.")
    try:
        content = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as err:
        raise ConfigurationError(f"Cannot parse '{path}': {err}") from err
    if content is None:
        return Settings()
    if not isinstance(content, dict):
        raise ConfigurationError(f"'{path}' must map section names to settings.")

    unknown_sections = set(content) - set(_SECTIONS)
    if unknown_sections:
        raise ConfigurationError(f"Unknown sections in '{path}': {sorted(unknown_sections)}.")
    for name, section in content.items():
        if section is not None and not isinstance(section, dict):
            raise ConfigurationError(f"Section [{name}] in '{path}' must be a mapping.")
    return Settings.from_dict(content)
