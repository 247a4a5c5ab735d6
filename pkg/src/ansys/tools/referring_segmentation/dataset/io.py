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
"""Provides the on-disk dataset format.

A dataset directory holds ``manifest.json`` and one binary blob per scene.
All integers in a blob are little-endian.

* Header: the magic ``RSEG`` then ``u32`` format version, width, height,
  frame count and channel count.
* Frames block: ``u32`` byte length, the zlib-compressed ``float32`` raster of
  all the frames in ``(frame, row, column, channel)`` order, ``u32`` CRC-32 of
  the compressed bytes.
* Per frame, the ground-truth masks then the candidate masks. Each list starts
  with a ``u32`` count. Each item is an ``i32`` object id (``-1`` for none)
  followed by a mask record.
* Mask record: ``u32`` width, height and run count, the ``u32`` runs, then a
  ``u32`` CRC-32 of the record bytes before it.
"""
from concurrent.futures import ThreadPoolExecutor
import json
from pathlib import Path
import struct
import zlib

from beartype.typing import Dict, List, Tuple, Union
import numpy as np

from ansys.tools.referring_segmentation.dataset.scene import (
    Candidate,
    Dataset,
    QuerySample,
    Scene,
    SceneSpec,
)
from ansys.tools.referring_segmentation.embedding import Frame
from ansys.tools.referring_segmentation.errors import ChecksumError, DatasetFormatError
from ansys.tools.referring_segmentation.language import Vocabulary
from ansys.tools.referring_segmentation.masks import BinaryMask
from ansys.tools.referring_segmentation.utils.config import Settings
from ansys.tools.referring_segmentation.utils.logger import logger

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
MAGIC = b"RSEG"
_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")
_HEADER = struct.Struct("<4s5I")


def blob_name(scene_id: int) -> str:
    """File name of the blob of a scene."""
    return f"scene_{scene_id:05d}.bin"


def _encode_mask(mask: BinaryMask) -> bytes:
    runs = np.asarray(mask.runs, dtype="<u4")
    record = _U32.pack(mask.width) + _U32.pack(mask.height) + _U32.pack(runs.size) + runs.tobytes()
    return record + _U32.pack(zlib.crc32(record))


def encode_scene(scene: Scene) -> bytes:
    """Binary blob of a scene."""
    spec = scene.spec
    channels = scene.frames[0].channels.shape[-1]
    raster = np.stack([frame.channels for frame in scene.frames]).astype("<f4")
    packed = zlib.compress(raster.tobytes())
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, spec.width, spec.height, spec.frames, channels),
        _U32.pack(len(packed)),
        packed,
        _U32.pack(zlib.crc32(packed)),
    ]
    for masks, candidates in zip(scene.object_masks, scene.candidates):
        parts.append(_U32.pack(len(masks)))
        for object_id, mask in masks.items():
            parts.append(_I32.pack(object_id) + _encode_mask(mask))
        parts.append(_U32.pack(len(candidates)))
        for candidate in candidates:
            parts.append(_I32.pack(candidate.object_id) + _encode_mask(candidate.mask))
    return b"".join(parts)


class _BlobReader:
    """Sequential reader that reports truncation and corruption with byte offsets."""

    def __init__(self, data: bytes, path: Path) -> None:
        self._data = data
        self._path = path
        self.offset = 0

    def read(self, count: int) -> bytes:
        if self.offset + count > len(self._data):
            raise ChecksumError(self._path, self.offset, "Truncated block")
        chunk = self._data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.read(4))[0]

    def i32(self) -> int:
        return _I32.unpack(self.read(4))[0]

    def check(self, payload: bytes, start: int) -> None:
        if zlib.crc32(payload) != self.u32():
            raise ChecksumError(self._path, start, "Checksum mismatch")

    def mask(self) -> BinaryMask:
        start = self.offset
        width, height, count = self.u32(), self.u32(), self.u32()
        runs = np.frombuffer(self.read(4 * count), dtype="<u4")
        self.check(self._data[start : self.offset], start)
        return BinaryMask(width, height, runs.astype(np.int64))

    def at_end(self) -> bool:
        return self.offset == len(self._data)


def decode_scene(
    data: bytes, spec: SceneSpec, split: str, path: Union[str, Path] = "<memory>"
) -> Scene:
    """Inverse of :func:`encode_scene`.

    Raises
    ------
    ChecksumError
        If a block is truncated or fails its checksum.
    DatasetFormatError
        If the blob does not match the scene layout or holds an invalid mask.

    """
    path = Path(path)
    reader = _BlobReader(data, path)
    magic, version, width, height, frames, channels = _HEADER.unpack(reader.read(_HEADER.size))
    if magic != MAGIC:
        raise DatasetFormatError(f"'{path}' is not a scene blob.")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"'{path}' has format version {version}, expected {FORMAT_VERSION}."
        )
    if (width, height, frames) != (spec.width, spec.height, spec.frames):
        raise DatasetFormatError(f"'{path}' does not match the manifest of scene {spec.scene_id}.")

    start = reader.offset
    packed = reader.read(reader.u32())
    reader.check(packed, start)
    try:
        raw = zlib.decompress(packed)
    except zlib.error as err:
        raise ChecksumError(path, start, f"Corrupt frame raster ({err})") from err
    raster = np.frombuffer(raw, dtype="<f4")
    if raster.size != frames * height * width * channels:
        raise ChecksumError(path, start, "Frame raster of unexpected size")
    raster = raster.reshape(frames, height, width, channels).astype(np.float32)

    object_masks: List[Dict[int, BinaryMask]] = []
    candidates: List[Tuple[Candidate, ...]] = []
    for _ in range(frames):
        masks = {}
        for _ in range(reader.u32()):
            object_id = reader.i32()
            masks[object_id] = reader.mask()
        object_masks.append(masks)
        frame_candidates = []
        for _ in range(reader.u32()):
            object_id = reader.i32()
            frame_candidates.append(Candidate(reader.mask(), object_id))
        candidates.append(tuple(frame_candidates))
    if not reader.at_end():
        raise ChecksumError(path, reader.offset, "Trailing bytes")
    return Scene(
        spec=spec,
        split=split,
        frames=tuple(Frame(raster[index]) for index in range(frames)),
        object_masks=tuple(object_masks),
        candidates=tuple(candidates),
    )


def manifest(dataset: Dataset) -> Dict[str, object]:
    """JSON-ready manifest of a dataset."""
    config = Settings(generator=dataset.config).to_dict()["generator"]
    return {
        "format_version": FORMAT_VERSION,
        "seed": dataset.seed,
        "config": config,
        "vocabulary": {
            "tokens": list(dataset.vocabulary.tokens),
            "counts": dataset.token_counts(),
        },
        "scenes": [
            {"spec": scene.spec.to_dict(), "split": scene.split, "blob": blob_name(scene.scene_id)}
            for scene in dataset.scenes
        ],
        "samples": [sample.to_dict() for sample in dataset.samples],
    }


def save_dataset(dataset: Dataset, path: Union[str, Path], workers: int = 1) -> Path:
    """Write a dataset directory.

    The output bytes depend only on the dataset content.

    Parameters
    ----------
    dataset : Dataset
        Dataset to write.
    path : str or Path
        Target directory, created when missing.
    workers : int, default: 1
        Upper bound on the threads writing scene blobs.

    Returns
    -------
    Path
        Path of the manifest.

    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    def write(scene: Scene) -> None:
        (path / blob_name(scene.scene_id)).write_bytes(encode_scene(scene))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        list(executor.map(write, dataset.scenes))
    manifest_path = path / MANIFEST_NAME
    manifest_path.write_text(json.dumps(manifest(dataset), sort_keys=True, indent=2) + "\n")
    logger.info(
        f"Saved {len(dataset.scenes)} scenes and {len(dataset.samples)} samples to '{path}'."
    )
    return manifest_path


def load_dataset(path: Union[str, Path], workers: int = 1) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`.

    Raises
    ------
    DatasetFormatError
        If the manifest is missing, malformed or of another format version.
    ChecksumError
        If a scene blob is truncated or corrupt.

    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"No dataset manifest at '{manifest_path}'.")
    try:
        content = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DatasetFormatError(f"Malformed manifest '{manifest_path}': {err}") from err
    version = content.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            f"'{manifest_path}' has format version {version}, expected {FORMAT_VERSION}."
        )

    try:
        config = Settings.from_dict({"generator": content["config"]}).generator
        entries = content["scenes"]
        records = content["samples"]
        vocabulary = Vocabulary.from_dict(content["vocabulary"])
        seed = int(content["seed"])
    except KeyError as err:
        raise DatasetFormatError(f"Manifest '{manifest_path}' lacks {err}.") from err

    def read(entry: Dict[str, object]) -> Scene:
        blob = path / str(entry["blob"])
        if not blob.is_file():
            raise DatasetFormatError(f"Missing scene blob '{blob}'.")
        spec = SceneSpec.from_dict(entry["spec"])
        return decode_scene(blob.read_bytes(), spec, entry["split"], blob)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        scenes = list(executor.map(read, entries))
    by_id = {scene.scene_id: scene for scene in scenes}
    samples = []
    for record in records:
        try:
            scene = by_id[int(record["scene_id"])]
            samples.append(
                QuerySample(
                    sample_id=int(record["sample_id"]),
                    scene=scene,
                    text=str(record["text"]),
                    family=str(record["family"]),
                    referent_id=int(record["referent_id"]),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise DatasetFormatError(f"Malformed sample record {record}: {err}") from err
    logger.info(f"Loaded {len(scenes)} scenes and {len(samples)} samples from '{path}'.")
    return Dataset(config, seed, scenes, samples, vocabulary)
