# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0

import io
import json
import os
import sys

import oocd

HERE = os.path.dirname(__file__)
sys.path.insert(0, os.path.join(HERE, "..", "..", "tools", "adapters"))
import protocol  # noqa: E402

STUB = [sys.executable, os.path.join(HERE, "stub_adapter.py")]


def test_protocol_answers_each_line():
    def fail(payload, config):
        raise RuntimeError("boom")

    handlers = {"echo": lambda payload, config: [payload, config["k"]], "fail": fail}
    stdin = io.StringIO(
        '{"id": 1, "kind": "echo", "payload": "x", "config": {"k": 2}}\n'
        "\n"
        "not json\n"
        '{"id": 2, "kind": "fail", "payload": "", "config": {}}\n'
        '{"id": 3, "kind": "other", "payload": "", "config": {}}\n'
    )
    stdout = io.StringIO()
    protocol.serve(handlers, stdin, stdout)
    replies = [json.loads(line) for line in stdout.getvalue().splitlines()]
    assert replies[0] == {"id": 1, "ok": True, "result": ["x", 2]}
    assert replies[1]["ok"] is False and replies[1]["id"] is None
    assert replies[2] == {"id": 2, "ok": False, "error": "RuntimeError: boom"}
    assert replies[3]["ok"] is False and "other" in replies[3]["error"]
    assert len(replies) == 4


def test_pipeline_through_subprocess_adapters(tmp_path):
    info = oocd.write_fixture(tmp_path, samples=20)
    config = json.loads(open(info["config"]).read())
    config["generation"] = {
        "backend_caption": "stub-caption",
        "backend_image": "stub-image",
        "caption_command": STUB,
        "image_command": STUB,
        "resolution": 32,
        "ddim_steps": 10,
    }
    config["encoders"] = {
        role: {"id": f"stub-{role}", "backend": "subprocess", "command": STUB, "dim": dim}
        for role, dim in (("joint", 512), ("text", 768), ("image", 1024))
    }
    config["classifiers"] = {"kinds": ["svm"], "threshold_baseline": False}
    config["features"] = {
        "similarity_groups": ["clip+sbert+vit"],
        "feature_map_groups": [],
        "reduced_groups": [],
    }
    with open(info["config"], "w") as f:
        json.dump(config, f)

    counters, reports = oocd.run(info["config"])
    assert counters["caption_calls"] == 20
    assert counters["image_calls"] == 20
    assert counters["encoder_invocations"] == 120
    assert len(reports[1]["rows"]) == 1

    counters, _ = oocd.run(info["config"])
    assert counters["encoder_invocations"] == 0
    assert counters["caption_calls"] == 0
