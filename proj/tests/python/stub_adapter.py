# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Deterministic stand-in backends served through the reference protocol."""

import hashlib
import os
import sys

import numpy as np
from PIL import Image

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "..", "tools", "adapters"))
from protocol import serve  # noqa: E402


def seeded(text):
    return np.random.default_rng(int(hashlib.sha256(text.encode()).hexdigest()[:8], 16))


def caption(path, config):
    return [f"stub caption {os.path.basename(path)}"] * int(config.get("caption_candidates", 1))


def image(prompt, config):
    size = int(config["resolution"])
    pixels = seeded(prompt).integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    path = os.path.join(config["output_dir"], hashlib.sha256(prompt.encode()).hexdigest()[:16] + ".png")
    Image.fromarray(pixels).save(path)
    return path


def embed(payload, config):
    if not payload:
        raise ValueError("empty input")
    v = seeded(config["encoder_id"] + payload).normal(size=int(config["dim"]))
    return (v / np.linalg.norm(v)).tolist()


if __name__ == "__main__":
    serve({"caption": caption, "image": image, "embed_text": embed, "embed_image": embed})
