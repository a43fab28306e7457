#!/usr/bin/env python3
"""Export torchvision ImageNet classifiers to uqbench weight files.

    python3 tools/export_torchvision_weights.py --out weights [--members resnet50 vgg16 ...]

Writes <out>/<member>__<source>.uqw (source defaults to "torchvision", the
weights id uqbench looks for by default). Requires torch + torchvision and
network access to fetch the DEFAULT pretrained weights.

File layout (little-endian):
    "UQW1" | u32 count | count x { u32 name_len | name | u32 rank | i64 dims[rank] | f32 data[] }
"""

import argparse
import os
import struct
import sys

MEMBERS = ["resnet50", "vgg16", "densenet121", "alexnet", "googlenet"]


def write_uqw(path, tensors):
    """tensors: iterable of (name, tensor-like with .shape and float data)."""
    import numpy as np

    items = [(name, np.ascontiguousarray(np.asarray(t, dtype="<f4"))) for name, t in tensors]
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(b"UQW1")
        f.write(struct.pack("<I", len(items)))
        for name, arr in items:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack("<%dq" % arr.ndim, *arr.shape))
            f.write(arr.tobytes())
    os.replace(tmp, path)


def exportable_state(model):
    out = []
    for name, t in model.state_dict().items():
        if name.endswith("num_batches_tracked") or name.startswith("aux"):
            continue
        out.append((name, t.detach().cpu().float().numpy()))
    return out


def pretrained(member):
    from torchvision import models

    if member == "googlenet":
        return models.googlenet(weights="DEFAULT")
    return models.get_model(member, weights="DEFAULT")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=os.environ.get("UQBENCH_WEIGHTS_DIR", "weights"))
    ap.add_argument("--members", nargs="+", default=MEMBERS, choices=MEMBERS)
    ap.add_argument("--source", default="torchvision", help="weights id used in the file name")
    args = ap.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    for member in args.members:
        model = pretrained(member).eval()
        path = os.path.join(args.out, "%s__%s.uqw" % (member, args.source))
        write_uqw(path, exportable_state(model))
        print("wrote", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
