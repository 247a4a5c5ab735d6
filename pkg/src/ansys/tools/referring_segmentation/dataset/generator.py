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
"""Provides the deterministic synthetic scene and query generator."""
from concurrent.futures import ThreadPoolExecutor

from beartype.typing import Dict, List, Optional, Sequence, Tuple
import numpy as np

from ansys.tools.referring_segmentation.dataset.scene import (
    COLORS,
    SHAPES,
    Candidate,
    Dataset,
    ObjectSpec,
    QuerySample,
    Scene,
    SceneSpec,
)
from ansys.tools.referring_segmentation.embedding import Frame
from ansys.tools.referring_segmentation.errors import ConfigurationError
from ansys.tools.referring_segmentation.language import Vocabulary
from ansys.tools.referring_segmentation.masks import BinaryMask, dilate, erode
from ansys.tools.referring_segmentation.utils.color import Color
from ansys.tools.referring_segmentation.utils.config import GeneratorConfig
from ansys.tools.referring_segmentation.utils.logger import logger

ORDINALS = ("first", "second", "third", "fourth", "fifth", "sixth")
RELATION_PHRASES = {"left": "left of", "right": "right of", "above": "above", "below": "below"}
BACKGROUND_NOISE = 0.03
MAX_LAYOUT_ATTEMPTS = 100
MAX_PLACEMENT_ATTEMPTS = 200

QueryOption = Tuple[str, int, str]


def rasterize(
    shape: str, center: Tuple[int, int], size: int, width: int, height: int
) -> np.ndarray:
    """Boolean ``(height, width)`` bitmap of a shape.

    Every shape is symmetric about the vertical line through its center, so
    mirroring the bitmap equals rasterizing the mirrored center.
    """
    cx, cy = center
    ys, xs = np.mgrid[0:height, 0:width]
    half = size / 2.0
    if shape == "circle":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= half**2
    if shape == "square":
        return (np.abs(xs - cx) <= half) & (np.abs(ys - cy) <= half)
    depth = (ys - (cy - half)) / size
    return (depth >= 0.0) & (depth <= 1.0) & (np.abs(xs - cx) <= depth * half)


def _separated(a: ObjectSpec, b: ObjectSpec, frames: int) -> bool:
    gap = (a.size + b.size) / 2.0 + 1.0
    for t in range(frames):
        (ax, ay), (bx, by) = a.center(t), b.center(t)
        if max(abs(ax - bx), abs(ay - by)) <= gap:
            return False
    return True


def _place_object(
    rng: np.random.Generator,
    object_id: int,
    shape: str,
    color: str,
    placed: Sequence[ObjectSpec],
    config: GeneratorConfig,
) -> Optional[ObjectSpec]:
    size = int(rng.integers(config.min_size, config.max_size + 1))
    margin = size // 2
    travel = config.frames - 1
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        vx, vy = (int(v) for v in rng.integers(-config.max_speed, config.max_speed + 1, size=2))
        x_lo = margin + max(0, -vx * travel)
        x_hi = config.width - 1 - margin - max(0, vx * travel)
        y_lo = margin + max(0, -vy * travel)
        y_hi = config.height - 1 - margin - max(0, vy * travel)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        x = int(rng.integers(x_lo, x_hi + 1))
        y = int(rng.integers(y_lo, y_hi + 1))
        spec = ObjectSpec(object_id, shape, color, size, x, y, vx, vy)
        if config.occlusion or all(_separated(spec, other, config.frames) for other in placed):
            return spec
    return None


def sample_layout(
    rng: np.random.Generator, scene_id: int, config: GeneratorConfig
) -> Optional[SceneSpec]:
    """Random object layout, or ``None`` when the objects could not be placed.

    Every object gets a distinct ``(shape, color)`` pair and keeps its center
    inside the frame for the whole video.
    """
    count = int(rng.integers(config.min_objects, config.max_objects + 1))
    pairs = [(shape, color) for shape in SHAPES for color in COLORS]
    chosen = rng.choice(len(pairs), size=count, replace=False)
    objects: List[ObjectSpec] = []
    for object_id, pair_index in enumerate(chosen):
        shape, color = pairs[int(pair_index)]
        spec = _place_object(rng, object_id, shape, color, objects, config)
        if spec is None:
            return None
        objects.append(spec)
    return SceneSpec(
        scene_id=scene_id,
        width=config.width,
        height=config.height,
        frames=config.frames,
        objects=tuple(objects),
        occlusion=config.occlusion,
    )


def _motion_label(spec: ObjectSpec) -> Optional[str]:
    if spec.vx == 0 and spec.vy == 0:
        return None
    if abs(spec.vx) >= abs(spec.vy):
        return "right" if spec.vx > 0 else "left"
    return "down" if spec.vy > 0 else "up"


def _relation_per_frame(
    relation: str, subject: ObjectSpec, anchor: ObjectSpec, frames: int
) -> List[bool]:
    result = []
    for t in range(frames):
        (sx, sy), (ax, ay) = subject.center(t), anchor.center(t)
        result.append(
            {"left": sx < ax, "right": sx > ax, "above": sy < ay, "below": sy > ay}[relation]
        )
    return result


def _stable_order(objects: Sequence[ObjectSpec], frames: int) -> Optional[List[ObjectSpec]]:
    """Objects sorted left to right when that order is strict and the same in every frame."""
    order = sorted(objects, key=lambda spec: spec.center(0)[0])
    for t in range(frames):
        xs = [spec.center(t)[0] for spec in order]
        if any(right <= left for left, right in zip(xs, xs[1:])):
            return None
    return order


def query_options(spec: SceneSpec) -> Dict[str, List[QueryOption]]:
    """Every unambiguous query of a scene, by template family.

    Each option is ``(family, referent_id, text)``. Scenes with a single object
    only support attribute queries.
    """
    options: Dict[str, List[QueryOption]] = {
        "attribute": [],
        "position": [],
        "relation": [],
        "motion": [],
    }
    objects = spec.objects
    for obj in objects:
        options["attribute"].append(("attribute", obj.object_id, f"the {obj.color} {obj.shape}"))
    if len(objects) < 2:
        return options

    for shape in SHAPES:
        same = [obj for obj in objects if obj.shape == shape]
        if len(same) < 2:
            continue
        order = _stable_order(same, spec.frames)
        if order is None:
            continue
        for rank, obj in enumerate(order):
            options["position"].append(
                ("position", obj.object_id, f"the {ORDINALS[rank]} {shape} from the left")
            )
        for rank, obj in enumerate(reversed(order)):
            options["position"].append(
                ("position", obj.object_id, f"the {ORDINALS[rank]} {shape} from the right")
            )

    for subject in objects:
        same = [obj for obj in objects if obj.shape == subject.shape]
        for anchor in objects:
            if anchor is subject:
                continue
            for relation, phrase in RELATION_PHRASES.items():
                if not all(_relation_per_frame(relation, subject, anchor, spec.frames)):
                    continue
                rivals = [
                    other
                    for other in same
                    if other is not subject
                    and other is not anchor
                    and any(_relation_per_frame(relation, other, anchor, spec.frames))
                ]
                if rivals:
                    continue
                text = f"the {subject.shape} {phrase} the {anchor.color} {anchor.shape}"
                options["relation"].append(("relation", subject.object_id, text))

    for obj in objects:
        label = _motion_label(obj)
        if label is None:
            continue
        rivals = [
            other
            for other in objects
            if other is not obj and other.shape == obj.shape and _motion_label(other) == label
        ]
        if not rivals:
            options["motion"].append(("motion", obj.object_id, f"the {obj.shape} moving {label}"))
    return options


def _select_queries(
    rng: np.random.Generator, options: Dict[str, List[QueryOption]], config: GeneratorConfig
) -> List[QueryOption]:
    families = [family for family in config.families if options.get(family)]
    pools = {family: list(options[family]) for family in families}
    chosen: List[QueryOption] = []
    texts = set()
    order = [families[int(i)] for i in rng.permutation(len(families))]
    while order and len(chosen) < config.queries_per_scene:
        for family in list(order):
            pool = pools[family]
            while pool:
                option = pool.pop(int(rng.integers(len(pool))))
                if option[2] not in texts:
                    chosen.append(option)
                    texts.add(option[2])
                    break
            if not pool:
                order.remove(family)
            if len(chosen) == config.queries_per_scene:
                break
    return chosen


def _candidate_masks(
    rng: np.random.Generator, masks: Dict[int, BinaryMask], config: GeneratorConfig
) -> Tuple[Candidate, ...]:
    candidates = []
    for object_id, mask in masks.items():
        noisy = mask
        if rng.random() < config.candidate_noise:
            noisy = erode(mask) if rng.random() < 0.5 else dilate(mask)
            if noisy.is_empty:
                noisy = mask
        if rng.random() < config.drop_prob:
            continue
        candidates.append(Candidate(noisy, object_id))
    if not candidates and masks:
        object_id, mask = next(iter(masks.items()))
        candidates.append(Candidate(mask, object_id))
    order = rng.permutation(len(candidates))
    return tuple(candidates[int(i)] for i in order)


def render_scene(
    spec: SceneSpec, rng: np.random.Generator, config: GeneratorConfig, split: str = "train"
) -> Scene:
    """Draw the frames, ground-truth masks and candidate masks of a layout.

    Objects are painted in id order, later ones on top.
    """
    frames, object_masks, candidates = [], [], []
    background = np.array(Color.BACKGROUND.rgb)
    for t in range(spec.frames):
        noise = rng.uniform(-BACKGROUND_NOISE, BACKGROUND_NOISE, size=(spec.height, spec.width, 3))
        rgb = np.clip(background + noise, 0.0, 1.0)
        bitmaps = [
            rasterize(obj.shape, obj.center(t), obj.size, spec.width, spec.height)
            for obj in spec.objects
        ]
        masks: Dict[int, BinaryMask] = {}
        covered = np.zeros((spec.height, spec.width), dtype=bool)
        for obj, bitmap in reversed(list(zip(spec.objects, bitmaps))):
            visible = bitmap & ~covered
            covered |= bitmap
            if visible.any():
                masks[obj.object_id] = BinaryMask.from_bitmap(visible)
        for obj, bitmap in zip(spec.objects, bitmaps):
            rgb[bitmap] = COLORS[obj.color]
        masks = dict(sorted(masks.items()))
        frames.append(Frame.from_rgb(rgb))
        object_masks.append(masks)
        candidates.append(_candidate_masks(rng, masks, config))
    return Scene(spec, split, tuple(frames), tuple(object_masks), tuple(candidates))


def _check_feasible(config: GeneratorConfig) -> None:
    multi_object = {"position", "relation", "motion"}
    if config.max_objects > len(SHAPES) * len(COLORS):
        raise ConfigurationError(
            f"At most {len(SHAPES) * len(COLORS)} objects per scene keep attributes unique."
        )
    feasible = set(config.families)
    if config.max_objects < 2:
        feasible -= multi_object
    if config.max_speed == 0:
        feasible.discard("motion")
    if not feasible:
        raise ConfigurationError(
            f"No requested query family {config.families} can be generated with "
            f"{config.min_objects}..{config.max_objects} objects and max_speed {config.max_speed}."
        )


def generate_scene(
    scene_id: int, seed_sequence: np.random.SeedSequence, config: GeneratorConfig, split: str
) -> Tuple[Scene, List[QueryOption]]:
    """One scene and its selected queries, drawn from a dedicated seed.

    Raises
    ------
    ConfigurationError
        If no layout with a query of a requested family is found.

    """
    rng = np.random.default_rng(seed_sequence)
    for attempt in range(MAX_LAYOUT_ATTEMPTS):
        spec = sample_layout(rng, scene_id, config)
        if spec is None:
            continue
        options = query_options(spec)
        if not any(options.get(family) for family in config.families):
            logger.debug(f"Scene {scene_id}: layout {attempt} supports no requested family.")
            continue
        scene = render_scene(spec, rng, config, split)
        queries = [
            option
            for option in _select_queries(rng, options, config)
            if any(option[1] in masks for masks in scene.object_masks)
        ]
        if queries:
            return scene, queries
    raise ConfigurationError(
        f"Scene {scene_id}: no feasible layout after {MAX_LAYOUT_ATTEMPTS} attempts."
    )


def generate_dataset(config: GeneratorConfig, seed: int, workers: int = 1) -> Dataset:
    """Generate scenes and query samples.

    The output is a pure function of ``(config, seed)``. Each scene draws from
    its own child of the seed sequence, so the worker count does not change it.

    Parameters
    ----------
    config : GeneratorConfig
        Generation settings.
    seed : int
        Root seed.
    workers : int, default: 1
        Upper bound on the worker threads.

    Returns
    -------
    Dataset
        Scenes in id order, samples numbered in scene order.

    Raises
    ------
    ConfigurationError
        If the settings cannot produce any requested query family.

    """
    _check_feasible(config)
    children = np.random.SeedSequence(seed).spawn(config.scenes)
    test_count = int(round(config.test_fraction * config.scenes))
    splits = ["test" if i >= config.scenes - test_count else "train" for i in range(config.scenes)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(
            executor.map(
                lambda i: generate_scene(i, children[i], config, splits[i]), range(config.scenes)
            )
        )

    scenes, samples = [], []
    for scene, queries in results:
        scenes.append(scene)
        for family, referent_id, text in queries:
            samples.append(QuerySample(len(samples), scene, text, family, referent_id))
    train_texts = (sample.text for sample in samples if sample.scene.split == "train")
    vocabulary = Vocabulary.build(train_texts)
    logger.info(
        f"Generated {len(scenes)} scenes and {len(samples)} samples "
        f"({splits.count('test')} test scenes, {len(vocabulary)} tokens)."
    )
    return Dataset(config, seed, scenes, samples, vocabulary)
