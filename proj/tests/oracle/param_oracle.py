#!/usr/bin/env python3
"""Reference parameter counter.

Instantiates each fixture architecture as a real torch module tree and counts
its trainable parameters with torch. It shares no code with the C++ counter:
active vertices come from explicit path enumeration, and each layer type is
built from stock torch layers.

Usage:
  param_oracle.py FIXTURES.json                 # print counts as JSON
  param_oracle.py FIXTURES.json --write OUT     # freeze counts into OUT
  param_oracle.py FIXTURES.json --check OUT     # compare against frozen OUT
"""
import argparse
import json
import sys

import torch
from torch import nn

DEFAULT_SHAPE = {"vocab_size": 30522, "max_positions": 128, "num_segments": 2, "num_classes": 2}


def all_paths(edges, src, dst):
    succ = {}
    for i, j in edges:
        succ.setdefault(i, []).append(j)
    out = []

    def walk(v, path):
        if v == dst:
            out.append(list(path))
            return
        for w in succ.get(v, []):
            path.append(w)
            walk(w, path)
            path.pop()

    walk(src, [src])
    return out


class SepConv(nn.Module):
    def __init__(self, w_in, w_out, k):
        super().__init__()
        self.depthwise = nn.Conv1d(w_in, w_in, k, groups=w_in, padding=k // 2, bias=False)
        self.pointwise = nn.Conv1d(w_in, w_out, 1)


class SelfAttn(nn.Module):
    def __init__(self, w_in, w_out, heads):
        super().__init__()
        if w_in == w_out:
            self.mha = nn.MultiheadAttention(w_out, heads)
        else:
            self.q = nn.Linear(w_in, w_out)
            self.k = nn.Linear(w_in, w_out)
            self.v = nn.Linear(w_in, w_out)
            self.o = nn.Linear(w_out, w_out)


class Glu(nn.Module):
    def __init__(self, w_in, w_out):
        super().__init__()
        self.proj = nn.Linear(w_in, 2 * w_out)
        self.gate = nn.GLU(dim=-1)


def make_layer(spec, w_in):
    t, p, w_out = spec["layer_type"], spec["layer_param"], spec["output_width"]
    if t == "conv":
        return nn.Conv1d(w_in, w_out, p, padding=p // 2)
    if t == "sep_conv":
        return SepConv(w_in, w_out, p)
    if t == "attn":
        return SelfAttn(w_in, w_out, p)
    if t == "glu":
        return Glu(w_in, w_out)
    raise ValueError(t)


def merge(mode, widths):
    return sum(widths) if mode == "concat" else max(widths)


class Block(nn.Module):
    def __init__(self, arch):
        super().__init__()
        hidden = arch["hidden_width"]
        blk = arch["block"]
        n = blk["n"]
        edges = [tuple(e) for e in blk["edges"]]
        paths = all_paths(edges, 0, n - 1)
        active = sorted({v for p in paths for v in p if 0 < v < n - 1})
        widths = {0: hidden}
        self.layers = nn.ModuleDict()
        for v in active:
            spec = blk["nodes"][v - 1]
            preds = [u for (u, w) in edges if w == v and (u == 0 or u in active)]
            w_in = merge(spec["input_mode"], [widths[u] for u in preds])
            self.layers[str(v)] = make_layer(spec, w_in)
            widths[v] = spec["output_width"]
        preds = [u for (u, w) in edges if w == n - 1 and (u == 0 or u in active)]
        merged = merge(blk["output_node"]["input_mode"], [widths[u] for u in preds])
        if merged != hidden:
            self.adapter = nn.Linear(merged, hidden)


class Student(nn.Module):
    def __init__(self, arch, shape):
        super().__init__()
        hidden = arch["hidden_width"]
        self.word = nn.Embedding(shape["vocab_size"], hidden)
        self.position = nn.Embedding(shape["max_positions"], hidden)
        self.segment = nn.Embedding(shape["num_segments"], hidden)
        self.blocks = nn.ModuleList([Block(arch) for _ in range(arch["repeats"])])
        self.classifier = nn.Linear(hidden, shape["num_classes"])


def count(module):
    return sum(p.numel() for p in module.parameters())


def oracle(fixtures):
    out = {}
    for fx in fixtures:
        shape = dict(DEFAULT_SHAPE, **fx.get("shape", {}))
        model = Student(fx["arch"], shape)
        emb = count(model.word) + count(model.position) + count(model.segment)
        blocks = count(model.blocks)
        cls = count(model.classifier)
        out[fx["name"]] = {"embedding": emb, "blocks": blocks, "classifier": cls, "total": count(model)}
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("fixtures")
    ap.add_argument("--write")
    ap.add_argument("--check")
    args = ap.parse_args()
    with open(args.fixtures) as f:
        counts = oracle(json.load(f))
    if args.write:
        with open(args.write, "w") as f:
            json.dump(counts, f, indent=1, sort_keys=True)
            f.write("\n")
    if args.check:
        with open(args.check) as f:
            frozen = json.load(f)
        if frozen != counts:
            for k in sorted(set(frozen) | set(counts)):
                if frozen.get(k) != counts.get(k):
                    print(f"mismatch {k}: frozen={frozen.get(k)} oracle={counts.get(k)}", file=sys.stderr)
            return 1
        print(f"oracle agrees with {len(counts)} frozen counts")
        return 0
    if not args.write:
        json.dump(counts, sys.stdout, indent=1, sort_keys=True)
        print()
    return 0


if __name__ == "__main__":
    torch.set_grad_enabled(False)
    sys.exit(main())
