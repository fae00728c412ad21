# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Out-of-context image-caption detection from generated counterparts."""

from ._core import (
    ConfigError,
    EmbeddingStore,
    Error,
    MissingArtifact,
    Model,
    Pipeline,
    TooManyFailures,
    accuracy,
    auc,
    cosine,
    expected_feature_length,
    fit_thresholds,
    load_annotations,
    reduce_dimensions,
    threshold_classify,
    train,
    write_fixture,
)

PRISTINE = 0
FALSIFIED = 1


def run(config, stage="all", **options):
    """Runs a pipeline stage; returns (counters, reports).

    Reports are present when the stage includes evaluation.
    """
    pipeline = Pipeline(config, **options)
    pipeline.run(stage)
    reports = pipeline.evaluate() if stage in ("all", "evaluate") else []
    return pipeline.counters, reports
