"""Lossless model checkpoints.

Format: a .npz archive holding every float64 array (weights, biases, norm
scale/shift, running statistics, classifier matrices) under stable keys,
plus a `meta` JSON string with the format version, architecture, and
per-row classifier origin tags. Arrays round-trip bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

from . import nn
from .engine import ModelState
from .errors import FormatError

FORMAT_VERSION = 1


def _meta(model: ModelState) -> dict:
    arch = model.extractor.arch
    return {
        "format_version": FORMAT_VERSION,
        "arch": {
            "input_dim": arch.input_dim,
            "hidden_dims": list(arch.hidden_dims),
            "feature_dim": arch.feature_dim,
            "with_norm": arch.with_norm,
        },
        "session_index": model.session_index,
        "origins": [block.origins for block in model.blocks],
    }


def save_model(model: ModelState, path: str):
    arrays: dict[str, np.ndarray] = {}
    for i, (lin, nm) in enumerate(zip(model.extractor.linears, model.extractor.norms)):
        arrays[f"f{i}_weight"] = lin.weight
        arrays[f"f{i}_bias"] = lin.bias
        if nm is not None:
            arrays[f"f{i}_gamma"] = nm.gamma
            arrays[f"f{i}_beta"] = nm.beta
            arrays[f"f{i}_running_mean"] = nm.running_mean
            arrays[f"f{i}_running_var"] = nm.running_var
    arrays["h0"] = model.base.weight
    for j, block in enumerate(model.novels, start=1):
        arrays[f"h{j}"] = block.weight
    arrays["meta"] = np.frombuffer(
        json.dumps(_meta(model), sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path: str) -> ModelState:
    with np.load(path) as archive:
        try:
            meta = json.loads(bytes(archive["meta"]).decode("utf-8"))
        except KeyError:
            raise FormatError(f"{path}: not a model checkpoint (no meta entry)")
        if meta.get("format_version") != FORMAT_VERSION:
            raise FormatError(
                f"{path}: unsupported checkpoint version {meta.get('format_version')!r}"
            )
        arch = nn.ExtractorArch(
            input_dim=meta["arch"]["input_dim"],
            hidden_dims=tuple(meta["arch"]["hidden_dims"]),
            feature_dim=meta["arch"]["feature_dim"],
            with_norm=meta["arch"]["with_norm"],
        )
        extractor = nn.Extractor(arch, rng=None)
        for i, (lin, nm) in enumerate(zip(extractor.linears, extractor.norms)):
            lin.weight[...] = archive[f"f{i}_weight"]
            lin.bias[...] = archive[f"f{i}_bias"]
            if nm is not None:
                nm.gamma[...] = archive[f"f{i}_gamma"]
                nm.beta[...] = archive[f"f{i}_beta"]
                nm.running_mean[...] = archive[f"f{i}_running_mean"]
                nm.running_var[...] = archive[f"f{i}_running_var"]
        origins = meta["origins"]
        base = nn.Classifier(archive["h0"], origins[0])
        novels = [
            nn.Classifier(archive[f"h{j}"], origins[j])
            for j in range(1, meta["session_index"] + 1)
        ]
    return ModelState(extractor, base, novels)
