"""
Network snapshots and agent checkpoints.

Network blob layout (all little-endian):

    bytes 0..7     magic b"DWSNET1\\0"
    bytes 8..15    uint64 k, number of spec integers that follow
    k x int64      [n_widths, width_0, ..., width_{n-1}, hidden_code, output_code]
    rest           float64 parameters in canonical layer order

hidden_code: 0 relu, 1 tanh. output_code: 0 identity, 1 tanh.
A blob round-trips bit-exactly. An agent checkpoint is a directory holding
one blob per network plus `meta.json`.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from core.approximator import Network, NetworkSpec
from utils.safety import CompatibilityError, DataError

logger = logging.getLogger(__name__)

MAGIC = b"DWSNET1\0"
HIDDEN_CODES = {"relu": 0, "tanh": 1}
OUTPUT_CODES = {"identity": 0, "tanh": 1}


def encode_network(net: Network) -> bytes:
    spec = net.spec
    ints = [
        len(spec.layer_widths),
        *spec.layer_widths,
        HIDDEN_CODES[spec.hidden_activation],
        OUTPUT_CODES[spec.output_activation],
    ]
    header = np.array([len(ints)], dtype="<u8").tobytes()
    spec_bytes = np.array(ints, dtype="<i8").tobytes()
    return MAGIC + header + spec_bytes + net.params.astype("<f8").tobytes()


def decode_network(blob: bytes) -> Network:
    """Inverse of `encode_network`.

    Raises:
        DataError: wrong magic, truncated blob or inconsistent spec list.
    """
    if blob[:8] != MAGIC:
        raise DataError("not a network blob (bad magic)")
    if len(blob) < 16:
        raise DataError("truncated network blob")
    k = int(np.frombuffer(blob, dtype="<u8", count=1, offset=8)[0])
    end = 16 + 8 * k
    if k < 3 or len(blob) < end:
        raise DataError("truncated network spec")
    ints = np.frombuffer(blob, dtype="<i8", count=k, offset=16).tolist()
    n_widths = ints[0]
    if k != n_widths + 3:
        raise DataError(f"spec list has {k} integers, expected {n_widths + 3}")
    hidden = {v: name for name, v in HIDDEN_CODES.items()}.get(ints[-2])
    output = {v: name for name, v in OUTPUT_CODES.items()}.get(ints[-1])
    if hidden is None or output is None:
        raise DataError("unknown activation code in network blob")
    spec = NetworkSpec(tuple(ints[1 : 1 + n_widths]), hidden, output)
    payload = blob[end:]
    if len(payload) != 8 * spec.n_params:
        raise DataError(f"blob carries {len(payload) // 8} parameters, spec needs {spec.n_params}")
    params = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Network(spec, params)


def save_network(path: str | Path, net: Network) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_network(net))
    return path


def load_network(path: str | Path) -> Network:
    return decode_network(Path(path).read_bytes())


def save_checkpoint(directory: str | Path, nets: dict[str, Network], meta: dict[str, Any]) -> Path:
    """Write `<name>.bin` for every network plus `meta.json`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, net in nets.items():
        save_network(directory / f"{name}.bin", net)
    (directory / "meta.json").write_text(
        json.dumps({**meta, "networks": sorted(nets)}, indent=2, sort_keys=True), encoding="utf-8"
    )
    logger.debug(f"Saved checkpoint {directory.name} ({len(nets)} networks)")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[dict[str, Network], dict[str, Any]]:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"checkpoint {directory.name} has no meta.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    nets = {name: load_network(directory / f"{name}.bin") for name in meta.get("networks", [])}
    return nets, meta


def check_compatible(meta: dict[str, Any], obs_dim: int, action_dim: int) -> None:
    """Raise CompatibilityError when a checkpoint does not fit an environment."""
    if meta.get("action_dim") != action_dim:
        raise CompatibilityError(
            f"checkpoint action_dim {meta.get('action_dim')} does not match env {action_dim}"
        )
    if meta.get("obs_dim") != obs_dim:
        raise CompatibilityError(
            f"checkpoint obs_dim {meta.get('obs_dim')} does not match env {obs_dim}"
        )
