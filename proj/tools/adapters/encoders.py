#!/usr/bin/env python3
# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Encoder adapter for the three reference encoder roles.

  --role joint  CLIP ViT-B/32, 512-d, embed_text and embed_image
  --role text   Sentence-BERT, 768-d, embed_text
  --role image  ViT-L/16 [CLS] token, 1024-d, embed_image

Payloads are caption text or image paths; results are float lists whose
length must equal config.dim.
"""

import argparse

from protocol import serve

DEFAULT_MODELS = {
    "joint": "openai/clip-vit-base-patch32",
    "text": "sentence-transformers/all-mpnet-base-v2",
    "image": "google/vit-large-patch16-224-in21k",
}


def checked(vector, config):
    values = [float(x) for x in vector]
    if len(values) != int(config["dim"]):
        raise ValueError(f"encoder produced {len(values)} values, expected {config['dim']}")
    return values


def joint_handlers(model_id, device):
    import torch
    from PIL import Image
    from transformers import CLIPModel, CLIPProcessor

    model = CLIPModel.from_pretrained(model_id).to(device).eval()
    processor = CLIPProcessor.from_pretrained(model_id)

    def text(payload, config):
        if not payload:
            raise ValueError("empty caption")
        inputs = processor(text=[payload], return_tensors="pt", truncation=True).to(device)
        with torch.no_grad():
            return checked(model.get_text_features(**inputs)[0].tolist(), config)

    def image(payload, config):
        inputs = processor(images=Image.open(payload).convert("RGB"), return_tensors="pt").to(device)
        with torch.no_grad():
            return checked(model.get_image_features(**inputs)[0].tolist(), config)

    return {"embed_text": text, "embed_image": image}


def text_handlers(model_id, device):
    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer(model_id, device=device)

    def text(payload, config):
        if not payload:
            raise ValueError("empty caption")
        return checked(model.encode([payload])[0].tolist(), config)

    return {"embed_text": text}


def image_handlers(model_id, device):
    import torch
    from PIL import Image
    from transformers import ViTImageProcessor, ViTModel

    model = ViTModel.from_pretrained(model_id).to(device).eval()
    processor = ViTImageProcessor.from_pretrained(model_id)

    def image(payload, config):
        inputs = processor(images=Image.open(payload).convert("RGB"), return_tensors="pt").to(device)
        with torch.no_grad():
            cls = model(**inputs).last_hidden_state[0, 0]
        return checked(cls.tolist(), config)

    return {"embed_image": image}


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--role", choices=sorted(DEFAULT_MODELS), required=True)
    parser.add_argument("--model")
    parser.add_argument("--device", default="cuda")
    args = parser.parse_args()
    build = {"joint": joint_handlers, "text": text_handlers, "image": image_handlers}[args.role]
    serve(build(args.model or DEFAULT_MODELS[args.role], args.device))


if __name__ == "__main__":
    main()
