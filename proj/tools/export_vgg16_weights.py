#!/usr/bin/env python3
"""Export ImageNet VGG16 convolution weights up to relu4_3 into the ATN
container format read by `make_extractor(Variant::Vgg16, path)`.

    python tools/export_vgg16_weights.py vgg16.ckpt
    python tools/export_vgg16_weights.py vgg16.ckpt --state-dict vgg16-397923af.pth

Point ATN_VGG16_WEIGHTS (or extractor.weights_path in the run config) at the
output file.
"""

import argparse
import json
import struct
import sys

import numpy as np
import torch

MAGIC = b"ATNCKPT1"
CONV_INDICES = [0, 2, 5, 7, 10, 12, 14, 17, 19, 21]  # features.* up to relu4_3


def load_state_dict(path):
    if path:
        return torch.load(path, map_location="cpu")
    from torchvision.models import VGG16_Weights, vgg16

    return vgg16(weights=VGG16_Weights.IMAGENET1K_V1).state_dict()


def write_container(path, arrays, config):
    header = {"arch": "vgg16-features", "config": config, "arrays": [], "history_bytes": 0}
    offset = 0
    for name, values in arrays:
        header["arrays"].append(
            {"name": name, "shape": list(values.shape), "offset": offset, "count": int(values.size)}
        )
        offset += int(values.size)
    text = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for _, values in arrays:
            f.write(values.astype("<f4", copy=False).tobytes())


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output")
    parser.add_argument("--state-dict", help="local torchvision VGG16 .pth instead of downloading")
    args = parser.parse_args(argv)

    state = load_state_dict(args.state_dict)
    arrays = []
    for i in CONV_INDICES:
        for kind in ("weight", "bias"):
            key = f"features.{i}.{kind}"
            if key not in state:
                sys.exit(f"error: state dict has no '{key}'")
            arrays.append((key, np.ascontiguousarray(state[key].detach().cpu().numpy(), dtype=np.float32)))
    write_container(args.output, arrays, {"source": "torchvision vgg16 IMAGENET1K_V1"})
    print(f"wrote {len(arrays)} arrays to {args.output}")


if __name__ == "__main__":
    main()
