"""Versioned JSON checkpoints for :class:`PolicyNet`."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .net import HEADS, PolicyNet

FORMAT = "edgemoe-policy"
VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(net: PolicyNet, path: str | os.PathLike, config_hash: str = "") -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config_hash": config_hash,
        "obs_width": net.obs_width,
        "hidden": list(net.hidden),
        "head_widths": dict(net.head_widths),
        # repr-exact floats, row-major
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
            for name, arr in net.params.items()
        },
    }
    atomic_write_text(path, json.dumps(doc))


def load_checkpoint(path: str | os.PathLike, expect_heads: dict[str, int] | None = None,
                    expect_obs_width: int | None = None) -> PolicyNet:
    """Read a checkpoint, optionally checking it fits the current config menus."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is truncated or not JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')} unsupported (want {VERSION})")
    try:
        obs_width = int(doc["obs_width"])
        hidden = tuple(int(h) for h in doc["hidden"])
        heads = {h: int(doc["head_widths"][h]) for h in HEADS}
        params = {
            name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
            for name, entry in doc["params"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc

    if expect_obs_width is not None and obs_width != expect_obs_width:
        raise CheckpointError(f"observation width {obs_width} != expected {expect_obs_width}")
    if expect_heads is not None:
        for h in HEADS:
            if heads[h] != expect_heads[h]:
                raise CheckpointError(f"head '{h}' has width {heads[h]}, config expects {expect_heads[h]}")

    expected_shapes = {}
    fan_in = obs_width
    for i, width in enumerate(hidden):
        expected_shapes[f"W{i}"] = (fan_in, width)
        expected_shapes[f"b{i}"] = (width,)
        fan_in = width
    for h in HEADS:
        expected_shapes[f"W_{h}"] = (fan_in, heads[h])
        expected_shapes[f"b_{h}"] = (heads[h],)
    expected_shapes["W_value"] = (fan_in, 1)
    expected_shapes["b_value"] = (1,)
    if set(params) != set(expected_shapes):
        raise CheckpointError(f"parameter set mismatch: {sorted(set(params) ^ set(expected_shapes))}")
    for name, shape in expected_shapes.items():
        if params[name].shape != shape:
            raise CheckpointError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
    net = PolicyNet(obs_width, heads, hidden, {name: params[name] for name in expected_shapes})
    if not net.is_finite():
        raise CheckpointError("checkpoint holds non-finite parameters")
    return net


def checkpoint_config_hash(path: str | os.PathLike) -> str:
    try:
        return json.loads(Path(path).read_text()).get("config_hash", "")
    except (OSError, json.JSONDecodeError):
        return ""
