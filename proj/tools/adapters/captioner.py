#!/usr/bin/env python3
# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Caption adapter backed by a pretrained BLIP-2 checkpoint.

Answers "caption" requests: payload is an image path, result is a list of
candidate captions (config.caption_candidates, at most
config.max_caption_tokens new tokens each).
"""

import argparse

from protocol import serve


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="Salesforce/blip2-opt-2.7b")
    parser.add_argument("--device", default="cuda")
    args = parser.parse_args()

    import torch
    from PIL import Image
    from transformers import Blip2ForConditionalGeneration, Blip2Processor

    dtype = torch.float16 if args.device.startswith("cuda") else torch.float32
    processor = Blip2Processor.from_pretrained(args.model)
    model = Blip2ForConditionalGeneration.from_pretrained(args.model, torch_dtype=dtype)
    model.to(args.device).eval()

    def caption(path, config):
        image = Image.open(path).convert("RGB")
        inputs = processor(images=image, return_tensors="pt").to(args.device, dtype)
        n = int(config.get("caption_candidates", 1))
        with torch.no_grad():
            out = model.generate(
                **inputs,
                max_new_tokens=int(config.get("max_caption_tokens", 40)),
                num_beams=max(n, 1),
                num_return_sequences=n,
            )
        return [t.strip() for t in processor.batch_decode(out, skip_special_tokens=True)]

    serve({"caption": caption})


if __name__ == "__main__":
    main()
