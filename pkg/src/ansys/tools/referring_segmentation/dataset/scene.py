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
"""Provides the scene, query sample and dataset containers."""
from dataclasses import dataclass, field, replace

from beartype.typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from ansys.tools.referring_segmentation.embedding import Frame
from ansys.tools.referring_segmentation.errors import DatasetFormatError
from ansys.tools.referring_segmentation.language import (
    DEFAULT_SWAP_TABLE,
    MAX_LENGTH,
    TokenSequence,
    Vocabulary,
    split_words,
    swap_direction_tokens,
    tokenize,
)
from ansys.tools.referring_segmentation.masks import BinaryMask, horizontal_flip
from ansys.tools.referring_segmentation.utils.config import GeneratorConfig

SHAPES = ("circle", "square", "triangle")
COLORS = {
    "red": (0.9, 0.15, 0.15),
    "green": (0.2, 0.8, 0.25),
    "blue": (0.2, 0.35, 0.95),
    "yellow": (0.95, 0.85, 0.2),
    "purple": (0.6, 0.25, 0.8),
    "cyan": (0.2, 0.85, 0.85),
}
SPLITS = ("train", "test")


@dataclass(frozen=True)
class ObjectSpec:
    """One moving object of a scene.

    The center at frame ``t`` is ``(x + vx * t, y + vy * t)`` in pixels.
    """

    object_id: int
    shape: str
    color: str
    size: int
    x: int
    y: int
    vx: int
    vy: int

    def __post_init__(self):
        """Check the categorical fields."""
        if self.shape not in SHAPES:
            raise DatasetFormatError(f"Unknown shape '{self.shape}'.")
        if self.color not in COLORS:
            raise DatasetFormatError(f"Unknown color '{self.color}'.")

    def center(self, frame_index: int) -> Tuple[int, int]:
        """Pixel center at a frame."""
        return self.x + self.vx * frame_index, self.y + self.vy * frame_index

    def mirrored(self, width: int) -> "ObjectSpec":
        """Same object in a horizontally mirrored frame of ``width`` pixels."""
        return replace(self, x=width - 1 - self.x, vx=-self.vx)

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation."""
        return {
            "object_id": self.object_id,
            "shape": self.shape,
            "color": self.color,
            "size": self.size,
            "x": self.x,
            "y": self.y,
            "vx": self.vx,
            "vy": self.vy,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, object]) -> "ObjectSpec":
        """Inverse of :meth:`to_dict`."""
        try:
            return cls(
                object_id=int(values["object_id"]),
                shape=str(values["shape"]),
                color=str(values["color"]),
                size=int(values["size"]),
                x=int(values["x"]),
                y=int(values["y"]),
                vx=int(values["vx"]),
                vy=int(values["vy"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise DatasetFormatError(f"Malformed object record: {err}") from err


@dataclass(frozen=True)
class SceneSpec:
    """Layout of a synthetic video."""

    scene_id: int
    width: int
    height: int
    frames: int
    objects: Tuple[ObjectSpec, ...]
    occlusion: bool = False

    def __post_init__(self):
        """Check the layout invariants."""
        if self.frames < 1:
            raise DatasetFormatError("A scene needs at least one frame.")
        if not self.objects:
            raise DatasetFormatError("A scene needs at least one object.")

    def object(self, object_id: int) -> ObjectSpec:
        """Object with the given id."""
        for spec in self.objects:
            if spec.object_id == object_id:
                return spec
        raise KeyError(object_id)

    def mirrored(self) -> "SceneSpec":
        """Layout of the horizontally mirrored video."""
        return replace(self, objects=tuple(spec.mirrored(self.width) for spec in self.objects))

    def to_dict(self) -> Dict[str, object]:
        """JSON-ready representation."""
        return {
            "scene_id": self.scene_id,
            "width": self.width,
            "height": self.height,
            "frames": self.frames,
            "occlusion": self.occlusion,
            "objects": [spec.to_dict() for spec in self.objects],
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, object]) -> "SceneSpec":
        """Inverse of :meth:`to_dict`."""
        try:
            return cls(
                scene_id=int(values["scene_id"]),
                width=int(values["width"]),
                height=int(values["height"]),
                frames=int(values["frames"]),
                occlusion=bool(values["occlusion"]),
                objects=tuple(ObjectSpec.from_dict(item) for item in values["objects"]),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise DatasetFormatError(f"Malformed scene record: {err}") from err


class Candidate(NamedTuple):
    """Candidate mask of a frame and the object it was derived from (``-1`` for none)."""

    mask: BinaryMask
    object_id: int


@dataclass(frozen=True)
class Scene:
    """Rendered video: frames, ground-truth object masks and candidate masks.

    Attributes
    ----------
    spec : SceneSpec
        Layout the video was rendered from.
    split : str
        ``"train"`` or ``"test"``.
    frames : Tuple[Frame, ...]
        Five-channel rasters.
    object_masks : Tuple[Dict[int, BinaryMask], ...]
        Per frame, the non-empty mask of every visible object.
    candidates : Tuple[Tuple[Candidate, ...], ...]
        Per frame, the candidate masks handed to the model.

    """

    spec: SceneSpec
    split: str
    frames: Tuple[Frame, ...]
    object_masks: Tuple[Dict[int, BinaryMask], ...]
    candidates: Tuple[Tuple[Candidate, ...], ...]

    def __post_init__(self):
        """Check that the per-frame containers line up."""
        if self.split not in SPLITS:
            raise DatasetFormatError(f"Unknown split '{self.split}'.")
        count = self.spec.frames
        if not len(self.frames) == len(self.object_masks) == len(self.candidates) == count:
            raise DatasetFormatError(f"Scene {self.scene_id} does not hold {count} frames.")

    @property
    def scene_id(self) -> int:
        """Id of the scene."""
        return self.spec.scene_id

    @property
    def num_frames(self) -> int:
        """Number of frames."""
        return self.spec.frames

    def candidate_masks(self, frame_index: int) -> List[BinaryMask]:
        """Candidate masks of one frame."""
        return [candidate.mask for candidate in self.candidates[frame_index]]

    def horizontal_flip(self) -> "Scene":
        """Mirror every frame, mask and object position. Applying it twice is the identity."""
        return Scene(
            spec=self.spec.mirrored(),
            split=self.split,
            frames=tuple(frame.horizontal_flip() for frame in self.frames),
            object_masks=tuple(
                {object_id: horizontal_flip(mask) for object_id, mask in masks.items()}
                for masks in self.object_masks
            ),
            candidates=tuple(
                tuple(Candidate(horizontal_flip(c.mask), c.object_id) for c in frame)
                for frame in self.candidates
            ),
        )


@dataclass(frozen=True)
class QuerySample:
    """A referring sentence paired with its referent in one scene.

    Attributes
    ----------
    sample_id : int
        Unique id in the dataset.
    scene : Scene
        Video the sentence refers to.
    text : str
        Query sentence.
    family : str
        Template family the sentence was generated from.
    referent_id : int
        Object id of the referent.
    direction_swap : Tuple[Tuple[str, str], ...], default: ()
        Direction words exchanged in the tokenized sentence of a mirrored
        sample. Empty for samples as generated.

    """

    sample_id: int
    scene: Scene
    text: str
    family: str
    referent_id: int
    direction_swap: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        """Check that the referent is visible in some frame."""
        if not any(self.referent_id in masks for masks in self.scene.object_masks):
            raise DatasetFormatError(
                f"Referent {self.referent_id} of sample {self.sample_id} is never visible."
            )

    @property
    def gt_masks(self) -> List[Optional[BinaryMask]]:
        """Per frame, the referent mask or ``None`` when it is not visible."""
        return [masks.get(self.referent_id) for masks in self.scene.object_masks]

    @property
    def annotated_frames(self) -> List[int]:
        """Frames where the referent is visible."""
        return [index for index, mask in enumerate(self.gt_masks) if mask is not None]

    def flipped(self, swap_table: Optional[Mapping[str, str]] = None) -> "QuerySample":
        """Mirrored scene whose tokenized sentence has its direction words exchanged.

        The text is kept as written. Flipping a flipped sample restores it.
        """
        table = DEFAULT_SWAP_TABLE if swap_table is None else swap_table
        swap = () if self.direction_swap else tuple(sorted(table.items()))
        return replace(self, scene=self.scene.horizontal_flip(), direction_swap=swap)

    def tokens(self, vocab: Vocabulary, max_length: int = MAX_LENGTH) -> TokenSequence:
        """Token ids of the sentence as seen by the model, direction swap applied."""
        sequence = tokenize(self.text, vocab, max_length)
        if self.direction_swap:
            sequence = swap_direction_tokens(sequence, vocab, dict(self.direction_swap))
        return sequence

    def to_dict(self) -> Dict[str, object]:
        """Manifest record. The scene is stored by id."""
        return {
            "sample_id": self.sample_id,
            "scene_id": self.scene.scene_id,
            "text": self.text,
            "family": self.family,
            "referent_id": self.referent_id,
        }


@dataclass
class Dataset:
    """Scenes and query samples with the settings and seed that produced them."""

    config: GeneratorConfig
    seed: int
    scenes: List[Scene]
    samples: List[QuerySample]
    vocabulary: Vocabulary = field(default_factory=Vocabulary)

    def __post_init__(self):
        """Index the scenes by id."""
        self._by_id = {scene.scene_id: scene for scene in self.scenes}

    def scene(self, scene_id: int) -> Scene:
        """Scene with the given id.

        Raises
        ------
        DatasetFormatError
            If no scene has that id.

        """
        try:
            return self._by_id[scene_id]
        except KeyError:
            raise DatasetFormatError(f"No scene with id {scene_id}.") from None

    def split(self, name: str) -> List[QuerySample]:
        """Samples of the scenes of one split."""
        if name not in SPLITS:
            raise DatasetFormatError(f"Unknown split '{name}', expected one of {SPLITS}.")
        return [sample for sample in self.samples if sample.scene.split == name]

    @property
    def families(self) -> List[str]:
        """Template families present, in first-seen order."""
        return list(dict.fromkeys(sample.family for sample in self.samples))

    def token_counts(self, samples: Optional[Sequence[QuerySample]] = None) -> Dict[str, int]:
        """Occurrences of each vocabulary word in the sample texts."""
        counts: Dict[str, int] = {}
        for sample in self.samples if samples is None else samples:
            for word in split_words(sample.text):
                counts[word] = counts.get(word, 0) + 1
        return dict(sorted(counts.items()))
