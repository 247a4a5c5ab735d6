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
"""Provides the contrastive objective, the optimizer, the scheduler and checkpoints."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
from pathlib import Path

from beartype.typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
import numpy as np

from ansys.tools.referring_segmentation.dataset.scene import QuerySample
from ansys.tools.referring_segmentation.errors import (
    DatasetFormatError,
    NumericalError,
    ShapeMismatchError,
)
from ansys.tools.referring_segmentation.language import Vocabulary
from ansys.tools.referring_segmentation.masks import BinaryMask, mask_iou
from ansys.tools.referring_segmentation.model import ParameterStore, ReferringModel
from ansys.tools.referring_segmentation.numerics import (
    as_float_array,
    l2_normalize,
    l2_normalize_backward,
    softmax,
)
from ansys.tools.referring_segmentation.utils.config import Settings, TrainingConfig
from ansys.tools.referring_segmentation.utils.logger import logger

LOSS_FLOOR = 1e-12
NORM_TOLERANCE = 1e-6
CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"


def _check_unit(vector: np.ndarray, name: str) -> None:
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise NumericalError(f"{name} must be L2-normalized, got norm {norm}.")


def contrastive_scores(embeddings, sentence, tau: float = 0.1) -> np.ndarray:
    """Softmax of the temperature-scaled cosines between candidates and the sentence.

    Parameters
    ----------
    embeddings : array_like
        ``(N, D)`` L2-normalized candidate embeddings.
    sentence : array_like
        L2-normalized sentence embedding of length ``D``.
    tau : float, default: 0.1
        Temperature.

    Returns
    -------
    numpy.ndarray
        Probabilities summing to one.

    Raises
    ------
    NumericalError
        If an input is not normalized or ``tau`` is not positive.

    """
    if tau <= 0.0:
        raise NumericalError(f"Temperature must be positive, got {tau}.")
    embeddings = np.atleast_2d(as_float_array(embeddings, "embeddings"))
    sentence = as_float_array(sentence, "sentence")
    if embeddings.shape[1] != sentence.shape[0]:
        raise ShapeMismatchError(
            f"Embeddings of width {embeddings.shape[1]} cannot match "
            f"a sentence of width {sentence.shape[0]}."
        )
    _check_unit(sentence, "Sentence embedding")
    for row in embeddings:
        _check_unit(row, "Candidate embedding")
    return softmax(embeddings @ sentence / tau)


def contrastive_loss(scores, gt_index: int) -> float:
    """Negative log-probability of the ground-truth candidate, floored at ``1e-12``.

    Raises
    ------
    NumericalError
        If ``scores`` is not a probability vector.
    ShapeMismatchError
        If ``gt_index`` is out of range.

    """
    scores = as_float_array(scores, "scores")
    if scores.ndim != 1 or np.any(scores < 0.0) or abs(scores.sum() - 1.0) > NORM_TOLERANCE:
        raise NumericalError("Scores must be a probability vector.")
    if not 0 <= gt_index < scores.size:
        raise ShapeMismatchError(
            f"Ground-truth index {gt_index} is out of range for {scores.size} scores."
        )
    return float(-math.log(max(float(scores[gt_index]), LOSS_FLOOR)))


def frame_loss(
    relation: np.ndarray, sentence: np.ndarray, gt_index: int, tau: float
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Contrastive loss of one frame and its gradients.

    Returns
    -------
    Tuple[float, numpy.ndarray, numpy.ndarray]
        Loss, gradient with respect to the ``(N, D)`` unnormalized relation
        embeddings and gradient with respect to the unnormalized sentence embedding.

    """
    units = np.stack([l2_normalize(row) for row in relation])
    sentence_unit = l2_normalize(sentence)
    scores = contrastive_scores(units, sentence_unit, tau)
    loss = contrastive_loss(scores, gt_index)
    d_logits = np.zeros_like(scores)
    if scores[gt_index] > LOSS_FLOOR:
        d_logits = scores.copy()
        d_logits[gt_index] -= 1.0
    d_logits /= tau
    d_relation = np.stack(
        [l2_normalize_backward(row, d_logits[i] * sentence_unit) for i, row in enumerate(relation)]
    )
    d_sentence = l2_normalize_backward(sentence, d_logits @ units)
    return loss, d_relation, d_sentence


def gt_candidate(
    candidates: Sequence[BinaryMask], gt_mask: BinaryMask, threshold: float = 0.5
) -> Optional[int]:
    """Index of the candidate best overlapping the annotation, if its IoU reaches ``threshold``."""
    if not candidates:
        return None
    ious = [mask_iou(candidate, gt_mask) for candidate in candidates]
    best = int(np.argmax(ious))
    return best if ious[best] >= threshold else None


def sample_loss_and_grads(
    model: ReferringModel, sample: QuerySample, config: TrainingConfig
) -> Optional[Tuple[float, Dict[str, np.ndarray]]]:
    """Mean loss over the annotated frames of a sample and the parameter gradients.

    Frames without a candidate linked to the annotation are left out.

    Returns
    -------
    Tuple[float, Dict[str, numpy.ndarray]] or None
        ``None`` when no frame of the sample is usable.

    """
    query = model.encode_query(sample.tokens(model.vocab, model.encoder_config.max_length))
    terms = []
    for frame_index in sample.annotated_frames:
        masks = sample.scene.candidate_masks(frame_index)
        gt_index = gt_candidate(masks, sample.gt_masks[frame_index], config.gt_iou_threshold)
        if gt_index is None:
            continue
        forward = model.embed_frame(sample.scene.frames[frame_index], masks, query)
        terms.append((forward, *frame_loss(forward.relation, query.sentence, gt_index, config.tau)))
    if not terms:
        return None

    count = len(terms)
    grads = model.params.zeros_like()
    d_sentence = np.zeros_like(query.sentence)
    d_hiddens = np.zeros_like(query.hiddens)
    for forward, _, d_relation, d_frame_sentence in terms:
        d_frame_hiddens = model.backward_frame(forward, d_relation / count, grads)
        if d_frame_hiddens is not None:
            d_hiddens += d_frame_hiddens
        d_sentence += d_frame_sentence / count
    model.backward_query(query, d_sentence, d_hiddens, grads)
    return sum(term[1] for term in terms) / count, grads


def augment_flip(
    sample: QuerySample,
    prob: float,
    rng: np.random.Generator,
    swap_table: Optional[Mapping[str, str]] = None,
) -> QuerySample:
    """Mirror the sample and swap its direction tokens with probability ``prob``.

    One random number is drawn on every call.
    """
    if rng.random() < prob:
        return sample.flipped(swap_table)
    return sample


@dataclass
class AdamState:
    """Moment accumulators of the Adam optimizer."""

    first: Dict[str, np.ndarray]
    second: Dict[str, np.ndarray]
    learning_rate: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: ParameterStore, learning_rate: float, **kwargs) -> "AdamState":
        """Zero moments for every parameter."""
        return cls(params.zeros_like(), params.zeros_like(), learning_rate, **kwargs)


def adam_step(
    params,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    learning_rate: Optional[float] = None,
):
    """Apply one bias-corrected Adam update in place.

    Parameters
    ----------
    params : ParameterStore or Dict[str, numpy.ndarray]
        Parameters, updated in place.
    grads : Mapping[str, numpy.ndarray]
        Gradients with the shapes of the parameters.
    state : AdamState
        Optimizer state, updated in place.
    learning_rate : float, default: None
        Overrides ``state.learning_rate`` when given.

    Returns
    -------
    ParameterStore or Dict[str, numpy.ndarray]
        ``params``.

    Raises
    ------
    ShapeMismatchError
        If a gradient does not match its parameter or its moments.

    """
    lr = state.learning_rate if learning_rate is None else learning_rate
    state.step += 1
    first_correction = 1.0 - state.beta1**state.step
    second_correction = 1.0 - state.beta2**state.step
    for name, grad in grads.items():
        value = params[name]
        if grad.shape != value.shape or state.first[name].shape != value.shape:
            raise ShapeMismatchError(
                f"Gradient of '{name}' has shape {grad.shape}, parameter has {value.shape}."
            )
        first = state.first[name]
        second = state.second[name]
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad**2
        value -= lr * (first / first_correction) / (np.sqrt(second / second_correction) + state.eps)
    return params


@dataclass
class PlateauState:
    """Bookkeeping of the reduce-on-plateau schedule."""

    learning_rate: float
    best: float = math.inf
    bad_epochs: int = 0
    epochs_seen: int = 0
    reductions: int = 0


def plateau_scheduler(
    history: Sequence[float],
    state: PlateauState,
    patience: int = 2,
    factor: float = 0.1,
    threshold: float = 1e-6,
) -> float:
    """Learning rate after the epochs of ``history`` not yet seen by ``state``.

    An epoch improves when its loss is below ``best - threshold``. After
    ``patience`` consecutive epochs without improvement the rate is multiplied
    by ``factor`` and the count restarts.

    Raises
    ------
    NumericalError
        If ``history`` is empty.

    """
    if not history:
        raise NumericalError("The scheduler needs at least one recorded epoch.")
    for loss in history[state.epochs_seen :]:
        state.epochs_seen += 1
        if loss < state.best - threshold:
            state.best = loss
            state.bad_epochs = 0
            continue
        state.bad_epochs += 1
        if state.bad_epochs >= patience:
            state.learning_rate *= factor
            state.bad_epochs = 0
            state.reductions += 1
            logger.info(
                f"Loss plateau at epoch {state.epochs_seen}, "
                f"learning rate lowered to {state.learning_rate:g}."
            )
    return state.learning_rate


class PlateauScheduler:
    """Stateful wrapper of :func:`plateau_scheduler`."""

    def __init__(
        self, learning_rate: float, patience: int = 2, factor: float = 0.1, threshold: float = 1e-6
    ):
        """Initialize the schedule."""
        self._history: List[float] = []
        self._state = PlateauState(learning_rate)
        self._patience = patience
        self._factor = factor
        self._threshold = threshold

    @property
    def state(self) -> PlateauState:
        """Current bookkeeping."""
        return self._state

    @property
    def learning_rate(self) -> float:
        """Current learning rate."""
        return self._state.learning_rate

    def step(self, loss: float) -> float:
        """Record an epoch loss and return the learning rate for the next epoch."""
        self._history.append(loss)
        return plateau_scheduler(
            self._history, self._state, self._patience, self._factor, self._threshold
        )


def training_step(
    model: ReferringModel,
    batch: Sequence[QuerySample],
    optimizer: AdamState,
    config: TrainingConfig,
    workers: int = 1,
) -> Tuple[ParameterStore, float, int]:
    """Forward, backward and Adam update over one batch.

    Gradients are averaged over the usable samples. Samples without any usable
    frame are skipped with a warning.

    Returns
    -------
    Tuple[ParameterStore, float, int]
        Updated parameters, mean loss and number of usable samples.

    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(lambda s: sample_loss_and_grads(model, s, config), batch))
    else:
        results = [sample_loss_and_grads(model, sample, config) for sample in batch]

    used = [(sample, result) for sample, result in zip(batch, results) if result is not None]
    for sample, result in zip(batch, results):
        if result is None:
            logger.warning(
                f"Sample {sample.sample_id} has no candidate linked to its referent, skipped."
            )
    if not used:
        return model.params, 0.0, 0

    total = model.params.zeros_like()
    loss = 0.0
    for _, (sample_loss, grads) in used:
        loss += sample_loss
        for name, grad in grads.items():
            total[name] += grad
    for grad in total.values():
        grad /= len(used)
    adam_step(model.params, total, optimizer)
    return model.params, loss / len(used), len(used)


@dataclass
class EpochRecord:
    """Loss log entry of one epoch."""

    epoch: int
    loss: float
    learning_rate: float
    samples: int
    skipped: int

    def to_dict(self) -> Dict[str, Union[int, float]]:
        """JSON-ready representation."""
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "learning_rate": self.learning_rate,
            "samples": self.samples,
            "skipped": self.skipped,
        }


@dataclass
class Trainer:
    """Training loop over query samples.

    Initialization, shuffling and augmentation all draw from one generator
    seeded with ``settings.training.seed``, so a run is reproducible.
    """

    settings: Settings
    vocabulary: Vocabulary
    workers: int = 1
    history: List[EpochRecord] = field(default_factory=list)

    def __post_init__(self):
        """Initialize the model, the optimizer and the schedule."""
        config = self.settings.training
        self._rng = np.random.default_rng(config.seed)
        params = ParameterStore.initialize(
            self.settings.model,
            self.settings.encoder,
            len(self.vocabulary),
            self._rng,
            config.init_scale,
        )
        self.model = ReferringModel(
            params, self.vocabulary, self.settings.model, self.settings.encoder
        )
        self.optimizer = AdamState.create(params, config.learning_rate)
        self.scheduler = PlateauScheduler(
            config.learning_rate, config.patience, config.factor, config.threshold
        )
        self.step = 0

    def train_epoch(self, samples: Sequence[QuerySample]) -> EpochRecord:
        """One shuffled pass over ``samples``."""
        config = self.settings.training
        swap_table = self.settings.encoder.swap_table
        order = self._rng.permutation(len(samples))
        weighted, used_total = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [
                augment_flip(samples[int(i)], config.flip_prob, self._rng, swap_table)
                for i in order[start : start + config.batch_size]
            ]
            _, loss, used = training_step(self.model, batch, self.optimizer, config, self.workers)
            weighted += loss * used
            used_total += used
            self.step += 1
        epoch_loss = weighted / used_total if used_total else 0.0
        record = EpochRecord(
            epoch=len(self.history) + 1,
            loss=epoch_loss,
            learning_rate=self.optimizer.learning_rate,
            samples=used_total,
            skipped=len(samples) - used_total,
        )
        self.history.append(record)
        self.optimizer.learning_rate = self.scheduler.step(epoch_loss)
        logger.info(
            f"Epoch {record.epoch}: loss {record.loss:.6f}, learning rate {record.learning_rate:g}."
        )
        return record

    def fit(
        self,
        samples: Sequence[QuerySample],
        epochs: Optional[int] = None,
        callback: Optional[Callable[[EpochRecord], None]] = None,
    ) -> List[EpochRecord]:
        """Train for ``epochs`` (default from the settings) and return the loss log."""
        epochs = self.settings.training.epochs if epochs is None else epochs
        for _ in range(epochs):
            record = self.train_epoch(samples)
            if callback is not None:
                callback(record)
        return self.history


@dataclass(frozen=True)
class Checkpoint:
    """A trained model with the settings and step it was saved at."""

    model: ReferringModel
    settings: Settings
    step: int


def save_checkpoint(
    path: Union[str, Path], model: ReferringModel, settings: Settings, step: int = 0
) -> Path:
    """Write the weights, vocabulary, settings and step to a ``.npz`` archive.

    Weights are stored as named ``float64`` arrays. The metadata is a JSON
    document stored as a ``uint8`` array under ``__meta__``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "names": list(model.params),
        "vocabulary": model.vocab.to_dict(),
        "settings": settings.to_dict(),
        "step": step,
    }
    arrays = {name: array for name, array in model.params.items()}
    encoded = json.dumps(meta, sort_keys=True).encode("utf-8")
    arrays[_META_KEY] = np.frombuffer(encoded, dtype=np.uint8)
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read an archive written by :func:`save_checkpoint`.

    Raises
    ------
    DatasetFormatError
        If the file is missing, unreadable or of another format version.

    """
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"Checkpoint '{path}' does not exist.")
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(bytes(archive[_META_KEY]).decode("utf-8"))
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise DatasetFormatError(
                    f"Checkpoint '{path}' has format version {meta.get('format_version')}, "
                    f"expected {CHECKPOINT_VERSION}."
                )
            arrays = {name: np.array(archive[name]) for name in meta["names"]}
    except (OSError, KeyError, ValueError) as err:
        if isinstance(err, DatasetFormatError):
            raise
        raise DatasetFormatError(f"Cannot read checkpoint '{path}': {err}") from err
    settings = Settings.from_dict(meta["settings"])
    vocabulary = Vocabulary.from_dict(meta["vocabulary"])
    model = ReferringModel(ParameterStore(arrays), vocabulary, settings.model, settings.encoder)
    return Checkpoint(model, settings, int(meta["step"]))
