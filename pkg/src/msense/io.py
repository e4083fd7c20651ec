"""File formats: profile/partition JSON, CSV matrices and vectors, metadata sidecars."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .levels import LevelPartition
from .profiles import DiagonalProfileSet

__all__ = [
    "profiles_to_dict", "profiles_from_dict", "save_profiles", "load_profiles",
    "partition_to_dict", "partition_from_dict", "save_partition", "load_partition",
    "save_matrix_csv", "load_matrix_csv", "save_vector_csv", "load_vector_csv",
    "save_ensemble", "config_hash", "sidecar_path", "write_sidecar", "write_json",
]


def _pairs(v):
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def profiles_to_dict(profiles: DiagonalProfileSet) -> dict:
    return {
        "C": profiles.C,
        "N": profiles.N,
        "mode": profiles.mode,
        "profiles": [_pairs(h) for h in profiles.h],
        "meta": profiles.meta,
    }


def profiles_from_dict(doc: dict, mode: str | None = None) -> DiagonalProfileSet:
    h = np.array(doc["profiles"], dtype=float)
    if h.ndim == 2:
        h = h[:, :, None]
    h = h[..., 0] + 1j * h[..., 1] if h.shape[-1] == 2 else h[..., 0].astype(complex)
    C, N = doc.get("C", h.shape[0]), doc.get("N", h.shape[1])
    if h.shape != (C, N):
        raise ValueError(f"profile array has shape {h.shape}, header says ({C}, {N})")
    return DiagonalProfileSet(h, mode or doc["mode"], dict(doc.get("meta", {})))


def partition_to_dict(partition: LevelPartition) -> dict:
    return {
        "N": partition.N,
        "index_base": 1,
        "levels": [[j + 1 for j in level] for level in partition.levels],
    }


def partition_from_dict(doc: dict) -> LevelPartition:
    base = int(doc.get("index_base", 1))
    return LevelPartition(int(doc["N"]), tuple(tuple(int(j) - base for j in level)
                                               for level in doc["levels"]))


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_profiles(profiles, path):
    write_json(path, profiles_to_dict(profiles))


def load_profiles(path, mode=None):
    return profiles_from_dict(_load_json(path), mode)


def save_partition(partition, path):
    write_json(path, partition_to_dict(partition))


def load_partition(path):
    return partition_from_dict(_load_json(path))


def save_matrix_csv(A, path) -> None:
    """Row-major CSV, real and imaginary parts interleaved per entry."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    inter = np.empty((A.shape[0], 2 * A.shape[1]))
    inter[:, 0::2] = A.real
    inter[:, 1::2] = A.imag
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in inter:
            w.writerow([repr(float(v)) for v in row])


def load_matrix_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] % 2:
        raise ValueError(f"{path}: odd column count {data.shape[1]}; expected re,im pairs")
    return data[:, 0::2] + 1j * data[:, 1::2]


def save_vector_csv(v, path) -> None:
    """One entry per line as ``re,im``."""
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for z in np.asarray(v, dtype=complex).ravel():
            w.writerow([repr(float(z.real)), repr(float(z.imag))])


def load_vector_csv(path) -> np.ndarray:
    """Read ``re,im`` lines, or a single real column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] == 1:
        return data[:, 0].astype(complex)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected 1 or 2 columns, got {data.shape[1]}")
    return data[:, 0] + 1j * data[:, 1]


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_sidecar(path, config: dict, **extra) -> Path:
    """Write ``<path>.meta.json`` with the config, its hash and the package version."""
    meta = {"version": __version__, "config_hash": config_hash(config), "config": config}
    meta.update(extra)
    out = sidecar_path(path)
    write_json(out, meta)
    return out


def save_ensemble(ensemble, path) -> Path:
    """CSV matrix plus a JSON sidecar with seed, mode and row provenance."""
    save_matrix_csv(ensemble.A, path)
    meta = ensemble.metadata()
    return write_sidecar(path, meta, sensor=ensemble.sensor.tolist(), draw=ensemble.draw.tolist())
