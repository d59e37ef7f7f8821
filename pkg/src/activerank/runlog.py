"""Run-directory artifacts: annotation log, selections, round metrics,
and versioned parameter snapshots.

All text artifacts are written deterministically (sorted JSON keys, full
float repr, no timestamps) so identically-seeded runs are byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .network import NetworkParams

PAIRS_HEADER = "id_i,id_j,label,round,source"
SELECTIONS_HEADER = "round,id,variance"

PARAMS_MAGIC = b"ARNKPRM\x00"
PARAMS_VERSION = 1


class RunWriter:
    """Append-only writer for one run directory; flushes after every row."""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._pairs = open(self.run_dir / "pairs.csv", "w", encoding="utf-8")
        self._pairs.write(PAIRS_HEADER + "\n")
        self._selections = open(self.run_dir / "selections.csv", "w", encoding="utf-8")
        self._selections.write(SELECTIONS_HEADER + "\n")
        self._rounds = open(self.run_dir / "rounds.jsonl", "w", encoding="utf-8")

    def write_config(self, config: dict) -> None:
        path = self.run_dir / "config.json"
        path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def append_pair(self, id_i: str, id_j: str, label: float, round_index: int, source: str) -> None:
        self._pairs.write(f"{id_i},{id_j},{label!r},{round_index},{source}\n")
        self._pairs.flush()

    def append_selection(self, round_index: int, sample_id: str, variance: float | None) -> None:
        var = "" if variance is None else repr(variance)
        self._selections.write(f"{round_index},{sample_id},{var}\n")
        self._selections.flush()

    def append_round(self, record: dict) -> None:
        self._rounds.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        self._rounds.flush()

    def write_params(self, params: NetworkParams, round_index: int) -> None:
        save_params(params, self.run_dir / f"params-round-{round_index}.bin")

    def write_summary(self, summary: dict) -> None:
        path = self.run_dir / "summary.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def close(self) -> None:
        for fh in (self._pairs, self._selections, self._rounds):
            fh.close()

    def __enter__(self) -> "RunWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def save_params(params: NetworkParams, path) -> None:
    """Versioned binary snapshot: magic, version, JSON header, raw float64."""
    header = {
        "layer_sizes": list(params.layer_sizes),
        "dropout_rate": params.dropout_rate,
        "weight_decay": params.weight_decay,
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<I", PARAMS_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(PARAMS_MAGIC))
        if magic != PARAMS_MAGIC:
            raise ParseError(f"{path}: not a parameter snapshot")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != PARAMS_VERSION:
            raise ParseError(f"{path}: unsupported snapshot version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        sizes = tuple(int(n) for n in header["layer_sizes"])
        weights = []
        biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(fh.read(8 * fan_in * fan_out), dtype="<f8").reshape(fan_in, fan_out)
            b = np.frombuffer(fh.read(8 * fan_out), dtype="<f8")
            weights.append(w.copy())
            biases.append(b.copy())
    return NetworkParams(
        layer_sizes=sizes,
        weights=weights,
        biases=biases,
        dropout_rate=header["dropout_rate"],
        weight_decay=header["weight_decay"],
    )


def read_pairs_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != PAIRS_HEADER:
            raise ParseError(f"{path}: unexpected header {header!r}")
        for line in fh:
            id_i, id_j, label, round_index, source = line.rstrip("\n").split(",")
            rows.append(
                {
                    "id_i": id_i,
                    "id_j": id_j,
                    "label": float(label),
                    "round": int(round_index),
                    "source": source,
                }
            )
    return rows
