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
"""Conftest file for unit tests."""
import dataclasses
import os

os.environ.setdefault("REFSEG_TESTMODE", "true")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from ansys.tools.referring_segmentation.dataset.generator import (  # noqa: E402
    generate_dataset,
    render_scene,
)
from ansys.tools.referring_segmentation.dataset.scene import ObjectSpec, SceneSpec  # noqa: E402
from ansys.tools.referring_segmentation.language import Vocabulary  # noqa: E402
from ansys.tools.referring_segmentation.model import ParameterStore, ReferringModel  # noqa: E402
from ansys.tools.referring_segmentation.utils.config import (  # noqa: E402
    EncoderConfig,
    GeneratorConfig,
    ModelConfig,
    Settings,
    TrainingConfig,
)

MICRO_WORDS = ("the", "red", "blue", "circle", "square", "left", "right", "of", "from", "first")


def pytest_collection_modifyitems(config, items):
    """Skip the desk-scale runs unless ``REFSEG_RUN_SLOW`` is set."""
    if os.environ.get("REFSEG_RUN_SLOW", "false").lower() == "true":
        return
    skip_slow = pytest.mark.skip(reason="set REFSEG_RUN_SLOW=true to run desk-scale tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(0)


@pytest.fixture
def micro_settings(small_config):
    """Settings with tiny dimensions, fast enough for finite differences."""
    return Settings(
        encoder=EncoderConfig(embedding_dim=4, hidden_dim=3),
        model=ModelConfig(feature_dim=4, embedding_dim=4),
        training=TrainingConfig(batch_size=2, epochs=2, init_scale=0.5),
        generator=small_config,
    )


def make_model(settings, vocab=None, seed=0, **model_overrides):
    """Model initialized from ``settings`` with a fixed seed."""
    vocab = Vocabulary(MICRO_WORDS) if vocab is None else vocab
    model_config = dataclasses.replace(settings.model, **model_overrides)
    params = ParameterStore.initialize(
        model_config,
        settings.encoder,
        len(vocab),
        np.random.default_rng(seed),
        settings.training.init_scale,
    )
    return ReferringModel(params, vocab, model_config, settings.encoder)


@pytest.fixture
def micro_model(micro_settings):
    """Randomly initialized micro model."""
    return make_model(micro_settings)


@pytest.fixture(scope="session")
def small_config():
    """Generator settings for a handful of 16x16 scenes."""
    return GeneratorConfig(
        width=16,
        height=16,
        frames=3,
        min_objects=2,
        max_objects=3,
        scenes=6,
        test_fraction=0.34,
        queries_per_scene=2,
        min_size=3,
        max_size=4,
        max_speed=1,
    )


@pytest.fixture(scope="session")
def small_dataset(small_config):
    """Dataset generated once per session."""
    return generate_dataset(small_config, seed=3)


@pytest.fixture
def two_circles(small_config):
    """Scene with a circle on the left and a circle on the right, both static."""
    spec = SceneSpec(
        scene_id=0,
        width=16,
        height=16,
        frames=3,
        objects=(
            ObjectSpec(0, "circle", "red", 4, 3, 8, 0, 0),
            ObjectSpec(1, "circle", "blue", 4, 12, 8, 0, 0),
        ),
    )
    return render_scene(spec, np.random.default_rng(0), small_config)


@pytest.fixture
def numeric_gradient():
    """Central finite differences of a scalar function of an array, perturbed in place."""

    def gradient(function, array, eps=1e-5):
        grad = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + eps
            upper = function()
            array[index] = original - eps
            lower = function()
            array[index] = original
            grad[index] = (upper - lower) / (2.0 * eps)
        return grad

    return gradient


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a| + |n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)
