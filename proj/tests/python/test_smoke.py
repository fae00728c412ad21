# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0

import json

import numpy as np
import pytest

import oocd


def test_cosine_and_errors():
    assert oocd.cosine([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-12)
    with pytest.raises(oocd.Error) as info:
        oocd.cosine([0, 0], [1, 0])
    assert info.value.code == "ZeroVector"
    with pytest.raises(oocd.Error):
        oocd.cosine([1, 0], [1, 0, 0])


def test_metrics():
    assert oocd.accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 75.0
    assert oocd.auc([0.1, 0.9, 0.8, 0.2], [0, 1, 1, 0]) == 100.0
    assert oocd.auc([0.5, 0.5], [0, 1]) == 50.0
    with pytest.raises(oocd.Error) as info:
        oocd.auc([0.1, 0.2], [1, 1])
    assert info.value.code == "SingleClassTruth"


def test_thresholds():
    assert oocd.threshold_classify((0.7, 0.2, 0.6), (0.5, 0.5, 0.5), "majority") == oocd.PRISTINE
    assert oocd.threshold_classify((0.7, 0.2, 0.6), (0.5, 0.5, 0.5), "all") == oocd.FALSIFIED
    rng = np.random.default_rng(0)
    pristine = rng.uniform(0.8, 0.95, size=(20, 3))
    falsified = rng.uniform(-0.1, 0.2, size=(20, 3))
    sims = np.vstack([pristine, falsified])
    labels = [0] * 20 + [1] * 20
    th = oocd.fit_thresholds(sims, labels, "mean")
    predicted = [oocd.threshold_classify(tuple(r), tuple(th), "mean") for r in sims]
    assert predicted == labels


def test_feature_lengths():
    assert oocd.expected_feature_length("similarity", "clip+vit") == 2
    assert oocd.expected_feature_length("feature_map", "clip+sbert+vit") == 4608
    with pytest.raises(oocd.ConfigError):
        oocd.expected_feature_length("similarity", "clip+resnet")


def test_pca_reconstructs_rank_two_data():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 6)) + rng.uniform(-5, 5, size=6)
    fit = oocd.reduce_dimensions(x, 2)
    recon = fit["transformed"] @ fit["components"] + fit["mean"]
    assert np.abs(x - recon).max() < 1e-9
    assert fit["warnings"] == []
    over = oocd.reduce_dimensions(x, 4)
    assert over["components"].shape == (2, 6)
    assert over["warnings"][0].startswith("DegenerateCovariance")


def test_store_round_trip(tmp_path):
    store = oocd.EmbeddingStore(tmp_path / "store")
    store.ensure_partition("enc", 3)
    assert store.put("a", "image", "enc", np.array([1.0, -0.0, 2.5]))
    assert not store.put("a", "image", "enc", np.array([9.0, 9.0, 9.0]))
    with pytest.raises(oocd.Error) as info:
        store.put("b", "image", "enc", [1.0, 2.0])
    assert info.value.code == "DimensionMismatch"
    store.flush()
    del store
    again = oocd.EmbeddingStore(tmp_path / "store")
    np.testing.assert_array_equal(again.get("a", "image", "enc"), [1.0, -0.0, 2.5])
    assert again.get("a", "caption", "enc") is None
    assert len(again) == 1
    assert again.partitions() == ["enc"]


def test_train_predict_save_load(tmp_path):
    rng = np.random.default_rng(2)
    x = np.vstack([rng.uniform(0.8, 0.95, (30, 3)), rng.uniform(-0.1, 0.2, (30, 3))])
    y = [0] * 30 + [1] * 30
    model = oocd.train("svm", x, y, x, y, seed=3)
    assert model.kind == "svm"
    assert model.predict(x) == y
    scores = model.scores(x)
    assert oocd.auc(scores, y) == 100.0
    model.save(tmp_path / "m")
    back = oocd.Model.load(tmp_path / "m")
    np.testing.assert_array_equal(back.scores(x), scores)
    with pytest.raises(oocd.Error) as info:
        model.scores(x[:, :2])
    assert info.value.code == "ShapeMismatch"
    with pytest.raises(oocd.Error) as info:
        oocd.train("mlp", x, [0] * 60)
    assert info.value.code == "SingleClassData"


def small_config(tmp_path, samples=40):
    info = oocd.write_fixture(tmp_path, samples=samples)
    config = json.loads(open(info["config"]).read())
    config["classifiers"] = {"kinds": ["svm"]}
    config["features"] = {
        "similarity_groups": ["clip+sbert+vit"],
        "feature_map_groups": [],
        "reduced_groups": [],
    }
    with open(info["config"], "w") as f:
        json.dump(config, f)
    return info["config"]


def test_fixture_pipeline_and_warm_rerun(tmp_path):
    config = small_config(tmp_path)
    counters, reports = oocd.run(config)
    assert counters["caption_calls"] == 40
    assert counters["encoder_invocations"] == 240
    assert [r["split"] for r in reports] == ["val", "test"]
    for row in reports[1]["rows"]:
        assert row["accuracy"] >= 95.0

    counters, _ = oocd.run(config)
    assert counters["caption_calls"] == 0
    assert counters["encoder_invocations"] == 0
    assert counters["models_trained"] == 0


def test_pipeline_errors(tmp_path):
    config = small_config(tmp_path)
    pipeline = oocd.Pipeline(config)
    pipeline.run("prepare")
    with pytest.raises(oocd.MissingArtifact) as info:
        pipeline.run("evaluate")
    assert info.value.exit_code == 3
    with pytest.raises(oocd.ConfigError):
        pipeline.run("deploy")
    with pytest.raises(oocd.ConfigError):
        oocd.Pipeline(config, split="holdout")
