"""Self-describing checkpoint container.

Layout: one magic line, one JSON header line (format version, metadata,
array manifest in a fixed order), then the raw little-endian float64 array
buffers concatenated. Serialization is deterministic, so save -> load ->
save reproduces the file byte for byte.
"""
from __future__ import annotations

import json
import hashlib
from pathlib import Path

import numpy as np

from .neural import ActorCriticNet
from .policy import ModularPolicy

MAGIC = b"COOPCONV-CKPT"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def _manifest(blocks: dict[str, dict[str, np.ndarray]]) -> list[dict]:
    entries = []
    for block in sorted(blocks):
        for name in sorted(blocks[block]):
            arr = blocks[block][name]
            entries.append({"block": block, "name": name, "shape": list(arr.shape)})
    return entries


def save_checkpoint(path, meta: dict, blocks: dict[str, dict[str, np.ndarray]]) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "meta": meta,
        "arrays": _manifest(blocks),
    }
    payload = b"".join(
        np.ascontiguousarray(blocks[e["block"]][e["name"]], dtype="<f8").tobytes()
        for e in header["arrays"]
    )
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    blob = (MAGIC + b"\n"
            + json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
            + payload)
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, dict[str, np.ndarray]]]:
    raw = Path(path).read_bytes()
    nl1 = raw.find(b"\n")
    if nl1 < 0 or raw[:nl1] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    nl2 = raw.find(b"\n", nl1 + 1)
    try:
        header = json.loads(raw[nl1 + 1:nl2])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} "
            f"(this build reads version {FORMAT_VERSION})")
    payload = raw[nl2 + 1:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    blocks: dict[str, dict[str, np.ndarray]] = {}
    offset = 0
    for entry in header["arrays"]:
        size = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = size * 8
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<f8").reshape(entry["shape"]).copy()
        offset += nbytes
        blocks.setdefault(entry["block"], {})[entry["name"]] = arr
    if offset != len(payload):
        raise CheckpointError(f"{path}: trailing bytes in payload")
    return header["meta"], blocks


# -- typed saves for the two policy shapes ------------------------------------

def save_modular_policy(path, policy: ModularPolicy, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m.update({
        "kind": "modular", "env_id": policy.env_id, "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim, "hidden": policy.hidden,
        "low_dim_z": policy.low_dim_z, "z_dim": policy.z_dim,
        "partner_ids": policy.active_ids(),
    })
    blocks = {"task": policy.task.params}
    for i in policy.active_ids():
        blocks[f"partner_{i}"] = policy.partners[i].params
    save_checkpoint(path, m, blocks)


def load_modular_policy(path) -> tuple[ModularPolicy, dict]:
    meta, blocks = load_checkpoint(path)
    if meta.get("kind") != "modular":
        raise CheckpointError(f"{path}: expected a modular policy checkpoint")
    policy = ModularPolicy(meta["env_id"], meta["obs_dim"], meta["act_dim"],
                           n_partners=0, rng=np.random.default_rng(0),
                           hidden=meta["hidden"], low_dim_z=meta["low_dim_z"])
    policy.task.params.update({k: v.copy() for k, v in blocks["task"].items()})
    max_id = max(meta["partner_ids"], default=-1)
    for i in range(max_id + 1):
        policy.attach_partner_module()
        if i not in meta["partner_ids"]:
            policy.detach_partner_module(i)
    for i in meta["partner_ids"]:
        policy.partners[i].params.update(
            {k: v.copy() for k, v in blocks[f"partner_{i}"].items()})
    return policy, meta


def save_plain_net(path, net: ActorCriticNet, meta: dict | None = None) -> None:
    m = dict(meta or {})
    m.update({
        "kind": "plain", "in_dim": net.in_dim, "hidden": net.hidden,
        "act_dim": net.act_dim,
        "z_dim": net.z_dim if net.projected_z else None,
    })
    save_checkpoint(path, m, {"net": net.params})


def load_plain_net(path) -> tuple[ActorCriticNet, dict]:
    meta, blocks = load_checkpoint(path)
    if meta.get("kind") != "plain":
        raise CheckpointError(f"{path}: expected a plain policy checkpoint")
    net = ActorCriticNet(meta["in_dim"], meta["hidden"], meta["act_dim"],
                         z_dim=meta["z_dim"], rng=np.random.default_rng(0))
    net.params.update({k: v.copy() for k, v in blocks["net"].items()})
    return net, meta


def load_any(path):
    meta, _ = load_checkpoint(path)
    if meta.get("kind") == "modular":
        return load_modular_policy(path)
    return load_plain_net(path)
