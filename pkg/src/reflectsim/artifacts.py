"""Run-directory artifacts: CSV logs, pixmap heatmaps and the manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TRAIN_HEADER = ["episode", "agent_id", "mean_cumulative_reward", "actor_loss", "critic_loss"]
SUMMARY_HEADER = ["algo", "seed", "mean_rssi_dbm", "std_rssi_dbm", "final_reward"]
HEATMAP_HEADER = ["row", "col", "x_m", "y_m", "rssi_dbm"]

# (dBm, r, g, b); linear interpolation between stops, clamped at both ends
RAMP_STOPS = (
    (-110.0, (0, 0, 0)),
    (-97.5, (128, 128, 128)),
    (-85.0, (40, 90, 220)),
    (-72.5, (250, 210, 40)),
    (-60.0, (220, 30, 30)),
)


def eval_header(num_users: int) -> list[str]:
    return ["step"] + [f"user_{k}_rssi_dbm" for k in range(num_users)] + ["mean_rssi_dbm"]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


class CsvLog:
    """Append-only CSV that flushes every row, so a crash leaves a readable prefix."""

    def __init__(self, path, header):
        self.path = Path(path)
        self.header = list(header)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.header)
        self._fh.flush()

    def write(self, row):
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} fields, header has {len(self.header)}")
        self._writer.writerow([_cell(v) for v in row])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, header, rows) -> Path:
    with CsvLog(path, header) as out:
        for row in rows:
            out.write(row)
    return Path(path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def eval_rows(rows: np.ndarray):
    for t, row in enumerate(rows):
        yield [t, *row.tolist()]


def ramp(dbm) -> np.ndarray:
    """Map dBm values to uint8 RGB with :data:`RAMP_STOPS`."""
    dbm = np.asarray(dbm, dtype=float)
    xs = np.array([s[0] for s in RAMP_STOPS])
    cols = np.array([s[1] for s in RAMP_STOPS], dtype=float)
    out = np.stack([np.interp(dbm, xs, cols[:, c]) for c in range(3)], axis=-1)
    return np.rint(out).astype(np.uint8)


def write_ppm(path, grid) -> Path:
    """Binary P6 pixmap; grid row 0 (lowest y) becomes the bottom image row."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("heatmap grid must be 2-D")
    rgb = ramp(grid[::-1])
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
    return Path(path)


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError("not an 8-bit P6 pixmap")
    w, h = map(int, dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(path, payload) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def write_manifest(out_dir, command: str, argv, config_hash: str, timings: dict,
                   results: dict, schemas: dict | None = None) -> Path:
    """List every file in ``out_dir`` with its hash; merges with an existing manifest."""
    from . import __version__

    out_dir = Path(out_dir)
    path = out_dir / "manifest.json"
    previous = json.loads(path.read_text()) if path.exists() else {}
    runs = previous.get("runs", [])
    runs.append({"command": command, "argv": list(argv), "config_sha256": config_hash,
                 "timings_s": timings, "results": results})
    files = {p.name: sha256_file(p) for p in sorted(out_dir.iterdir())
             if p.is_file() and p.name != "manifest.json" and not p.name.endswith(".tmp")}
    payload = {
        "schema_version": SCHEMA_VERSION,
        "versions": {"reflectsim": __version__, "numpy": np.__version__},
        "csv_schemas": {**previous.get("csv_schemas", {}), **(schemas or {})},
        "files": files,
        "runs": runs,
    }
    return write_json_atomic(path, payload)
