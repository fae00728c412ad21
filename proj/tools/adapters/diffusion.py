#!/usr/bin/env python3
# Copyright 2026 The oocd Authors.
# SPDX-License-Identifier: Apache-2.0
"""Image adapter backed by a latent-diffusion text-to-image pipeline.

Answers "image" requests: payload is the caption used verbatim as the
prompt. The config carries ddim_steps, guidance_scale, seed, resolution and
output_dir; the result is the path of the PNG written there.
"""

import argparse
import hashlib
import os

from protocol import serve


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="CompVis/stable-diffusion-v1-4")
    parser.add_argument("--device", default="cuda")
    args = parser.parse_args()

    import torch
    from diffusers import DDIMScheduler, StableDiffusionPipeline

    dtype = torch.float16 if args.device.startswith("cuda") else torch.float32
    pipe = StableDiffusionPipeline.from_pretrained(args.model, torch_dtype=dtype)
    pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
    pipe.to(args.device)
    pipe.set_progress_bar_config(disable=True)

    def image(prompt, config):
        generator = torch.Generator(device=args.device).manual_seed(int(config["seed"]))
        size = int(config["resolution"])
        result = pipe(
            prompt,
            num_inference_steps=int(config["ddim_steps"]),
            guidance_scale=float(config["guidance_scale"]),
            height=size,
            width=size,
            generator=generator,
        ).images[0]
        os.makedirs(config["output_dir"], exist_ok=True)
        name = hashlib.sha256(prompt.encode()).hexdigest()[:16] + ".png"
        path = os.path.join(config["output_dir"], name)
        result.save(path)
        return path

    serve({"image": image})


if __name__ == "__main__":
    main()
