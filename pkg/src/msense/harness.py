"""Phase-transition experiments: seeded trials over a (C, m, s) grid.

Every trial draws its randomness from
``SeedSequence(master_seed, spawn_key=(C, m, s, trial))``, so a cell's
result does not depend on which worker runs it or in what order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .io import config_hash
from .levels import LevelPartition, sample_sparse_distributed
from .profiles import (
    DiagonalProfileSet,
    banded_profiles,
    dft_isometry,
    piecewise_constant_profiles,
    random_isometry,
)
from .sampling import RowDistribution, assemble_distinct, assemble_identical
from .solver import SolverOptions, basis_pursuit, recovery_error

__all__ = [
    "ExperimentConfig",
    "PhaseGrid",
    "ContourPoint",
    "build_profiles",
    "effective_lambda",
    "total_measurements",
    "trial_instance",
    "run_trial",
    "run_phase_transition",
    "contour50",
    "emit",
    "load_grid",
    "resolve_threads",
]

FAMILIES = ("banded", "piecewise-constant")


@dataclass
class ExperimentConfig:
    """Parameters of one phase-transition sweep.

    With ``m_per_sensor`` each m_grid value is the number of measurements
    per sensor and a cell with C sensors uses ``C * m`` rows in total;
    otherwise m_grid values are total row counts.

    ``lam`` is the sparse-and-distributed parameter. When a cell's s cannot
    be split over the D levels within ``floor(lam*s/D)`` per level, the
    cell uses the smallest lambda that makes it admissible (see
    `effective_lambda`).
    """

    N: int = 128
    C_list: list = field(default_factory=lambda: [1, 2, 3, 4])
    mode: str = "distinct"
    profile_family: str = "banded"
    r1: int = 1
    r2: int = 0
    shape: str = "smooth-overlap"
    leak: float = 0.1
    levels: int | None = None
    isometry: str = "dft"
    distribution: str = "fourier"
    allocation: str = "equal-split"
    m_grid: list = field(default_factory=lambda: [16, 32, 48])
    m_per_sensor: bool = False
    s_grid: list = field(default_factory=lambda: [2, 4, 6, 8])
    trials_per_cell: int = 50
    lam: float = 1.0
    eta: float = 0.0
    success_threshold: float = 1e-3
    master_seed: int = 0
    max_iterations: int = 20000
    magnitude: str = "phase"

    def __post_init__(self):
        self.C_list = [int(c) for c in self.C_list]
        self.m_grid = [int(m) for m in self.m_grid]
        self.s_grid = [int(s) for s in self.s_grid]
        self.validate()

    def validate(self) -> None:
        if not (self.C_list and self.m_grid and self.s_grid):
            raise ValueError("C_list, m_grid and s_grid must be non-empty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be at least 1")
        if self.mode not in ("distinct", "identical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.profile_family not in FAMILIES:
            raise ValueError(f"unknown profile family {self.profile_family!r}")
        if self.distribution not in RowDistribution.KINDS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if min(self.C_list) < 1 or min(self.m_grid) < 1 or min(self.s_grid) < 0:
            raise ValueError("C and m must be positive and s non-negative")
        if max(self.s_grid) > self.N:
            raise ValueError("s values cannot exceed N")
        if self.lam < 1 or self.eta < 0 or self.success_threshold <= 0:
            raise ValueError("need lam >= 1, eta >= 0 and a positive success threshold")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        needs_split = self.mode == "identical" or self.allocation == "equal-split"
        if needs_split and not self.m_per_sensor:
            bad = [(m, C) for m in self.m_grid for C in self.C_list if m % C]
            if bad:
                m, C = bad[0]
                raise ValueError(f"m={m} is not divisible by C={C}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        banded = doc.get("profile_family")
        if isinstance(banded, dict):
            # {"banded": {"r1": 1, "r2": 0}} shorthand
            (name, params), = banded.items()
            doc["profile_family"] = name
            doc.update(params)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def hash(self) -> str:
        return config_hash(self.to_dict())


@dataclass
class PhaseGrid:
    """Success probabilities indexed ``[C, m, s]`` with a config echo."""

    C_list: list
    m_grid: list
    s_grid: list
    success_prob: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.success_prob = np.asarray(self.success_prob, dtype=float)
        shape = (len(self.C_list), len(self.m_grid), len(self.s_grid))
        if self.success_prob.shape != shape:
            raise ValueError(f"success_prob has shape {self.success_prob.shape}, expected {shape}")
        if np.any((self.success_prob < 0) | (self.success_prob > 1)):
            raise ValueError("success probabilities must lie in [0, 1]")

    @property
    def n_cells(self) -> int:
        return self.success_prob.size

    def to_dict(self) -> dict:
        return {
            "C_list": list(self.C_list),
            "m_grid": list(self.m_grid),
            "s_grid": list(self.s_grid),
            "success_prob": self.success_prob.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseGrid":
        return cls(doc["C_list"], doc["m_grid"], doc["s_grid"],
                   np.array(doc["success_prob"], dtype=float), doc.get("metadata", {}))

    def rows(self):
        for a, C in enumerate(self.C_list):
            for b, m in enumerate(self.m_grid):
                for c, s in enumerate(self.s_grid):
                    yield C, m, s, float(self.success_prob[a, b, c])


def total_measurements(config: ExperimentConfig, C: int, m: int) -> int:
    return C * m if config.m_per_sensor else m


def effective_lambda(partition: LevelPartition, s: int, lam: float) -> float:
    """Smallest lambda >= `lam` for which an s-sparse, distributed support exists."""
    if s == 0:
        return lam
    D = partition.D
    # levels smaller than ceil(s/D) force a larger per-level cap
    cap = math.ceil(s / D)
    while np.minimum(partition.sizes, cap).sum() < s:
        cap += 1
    return float(max(lam, D * cap / s))


def build_profiles(config: ExperimentConfig, C: int):
    """Profile set and level partition used for cells with C sensors."""
    if config.profile_family == "banded":
        return banded_profiles(C, config.N, config.r1, config.r2, shape=config.shape,
                               mode=config.mode, D=config.levels, leak=config.leak,
                               strict=False)
    D = config.levels or C
    partition = LevelPartition.contiguous(config.N, D, strict=False)
    if config.isometry == "dft":
        V = dft_isometry(C, D)
    else:
        ss = np.random.SeedSequence(config.master_seed, spawn_key=(C, 0xF00D))
        V = random_isometry(C, D, np.random.default_rng(ss))
    return piecewise_constant_profiles(V, partition, config.mode), partition


def _noise(rng, m, eta):
    if eta == 0:
        return np.zeros(m, dtype=complex)
    g = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return eta * g / np.linalg.norm(g)


def trial_instance(config: ExperimentConfig, profiles: DiagonalProfileSet,
                   partition: LevelPartition, C: int, m: int, s: int, trial: int):
    """The seeded ``(A, x, y)`` of one trial; depends only on the cell and trial index."""
    ss = np.random.SeedSequence(config.master_seed, spawn_key=(C, m, s, trial))
    sig_ss, mat_ss, noise_ss = ss.spawn(3)
    lam = effective_lambda(partition, s, config.lam)
    x = sample_sparse_distributed(partition, s, lam, magnitude=config.magnitude,
                                  rng=np.random.default_rng(sig_ss)).astype(complex)
    total = total_measurements(config, C, m)
    dist = RowDistribution(config.distribution, config.N)
    mat_rng = np.random.default_rng(mat_ss)
    if config.mode == "distinct":
        ens = assemble_distinct(profiles, dist, total, allocation=config.allocation, seed=mat_rng)
    else:
        ens = assemble_identical(profiles, dist, total, seed=mat_rng)
    y = ens.A @ x + _noise(np.random.default_rng(noise_ss), total, config.eta)
    return ens.A, x, y


def run_trial(config: ExperimentConfig, profiles: DiagonalProfileSet,
              partition: LevelPartition, C: int, m: int, s: int, trial: int) -> bool:
    """One seeded recovery attempt; True when it converged within the threshold."""
    A, x, y = trial_instance(config, profiles, partition, C, m, s, trial)
    res = basis_pursuit(A, y, SolverOptions(eta=config.eta,
                                            max_iterations=config.max_iterations))
    if not res.converged:
        return False
    return recovery_error(res.x_hat, x).rel_l2 <= config.success_threshold


def _run_cell(args):
    config, C, m, s = args
    profiles, partition = build_profiles(config, C)
    wins = sum(run_trial(config, profiles, partition, C, m, s, t)
               for t in range(config.trials_per_cell))
    return wins


def resolve_threads(threads: int | None = None) -> int:
    """Explicit count, else ``MSENSE_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("MSENSE_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be positive")
    return threads


def run_phase_transition(config: ExperimentConfig, threads: int | None = None,
                         progress=None) -> PhaseGrid:
    """Success probability for every (C, m, s) cell of the config grid.

    Cells run in a process pool of `threads` workers. Results are assembled
    by cell index, so the grid is identical for any worker count.
    `progress`, if given, is called with (done, total) after each cell.
    """
    config.validate()
    threads = resolve_threads(threads)
    cells = [(config, C, m, s) for C in config.C_list for m in config.m_grid
             for s in config.s_grid]
    if threads == 1:
        wins = []
        for k, cell in enumerate(cells):
            wins.append(_run_cell(cell))
            if progress:
                progress(k + 1, len(cells))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            wins = []
            for k, w in enumerate(pool.map(_run_cell, cells, chunksize=1)):
                wins.append(w)
                if progress:
                    progress(k + 1, len(cells))
    prob = np.array(wins, dtype=float).reshape(
        len(config.C_list), len(config.m_grid), len(config.s_grid)) / config.trials_per_cell
    meta = {"config": config.to_dict(), "config_hash": config.hash(), "version": __version__}
    return PhaseGrid(list(config.C_list), list(config.m_grid), list(config.s_grid), prob, meta)


@dataclass(frozen=True)
class ContourPoint:
    """50% crossing at one m. ``flag`` is 'crossing', 'above' or 'below'.

    'above': success stays >= 0.5 over the whole s range (pinned at max s).
    'below': success is < 0.5 already at the smallest s (pinned at min s).
    """

    m: int
    s_star: float
    flag: str


def _crossing(s_grid, p):
    if p[0] < 0.5:
        return float(s_grid[0]), "below"
    for k in range(len(p) - 1):
        if p[k] >= 0.5 > p[k + 1]:
            t = (p[k] - 0.5) / (p[k] - p[k + 1])
            return float(s_grid[k] + t * (s_grid[k + 1] - s_grid[k])), "crossing"
    return float(s_grid[-1]), "above"


def contour50(grid: PhaseGrid) -> dict:
    """Per-C list of `ContourPoint`, one per m, at the first downward 0.5 crossing in s."""
    order = np.argsort(grid.s_grid, kind="stable")
    s_sorted = [grid.s_grid[k] for k in order]
    curves = {}
    for a, C in enumerate(grid.C_list):
        curves[C] = [ContourPoint(m, *_crossing(s_sorted, grid.success_prob[a, b, order]))
                     for b, m in enumerate(grid.m_grid)]
    return curves


def _write_grid_csv(grid, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["C", "m", "s", "success_prob"])
        for C, m, s, p in grid.rows():
            w.writerow([C, m, s, repr(p)])


def _write_curves_csv(curves, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["C", "m", "s_star", "flag"])
        for C, pts in curves.items():
            for pt in pts:
                w.writerow([C, pt.m, repr(pt.s_star), pt.flag])


def _curves_json(curves):
    return {str(C): [asdict(pt) for pt in pts] for C, pts in curves.items()}


def _write_svg(curves, path, width=480, height=360, pad=40):
    pts = [pt for c in curves.values() for pt in c]
    m_lo, m_hi = min(p.m for p in pts), max(p.m for p in pts)
    s_lo, s_hi = min(p.s_star for p in pts), max(p.s_star for p in pts)
    m_span, s_span = (m_hi - m_lo) or 1, (s_hi - s_lo) or 1
    colors = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for k, (C, c_pts) in enumerate(curves.items()):
        xy = " ".join(
            f"{pad + (p.m - m_lo) / m_span * (width - 2 * pad):.2f},"
            f"{height - pad - (p.s_star - s_lo) / s_span * (height - 2 * pad):.2f}"
            for p in c_pts)
        lines.append(f'<polyline data-C="{C}" fill="none" stroke="{colors[k % len(colors)]}" '
                     f'stroke-width="2" points="{xy}"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit(obj, fmt: str, path) -> None:
    """Write a `PhaseGrid` (csv, json) or a contour dict (csv, json, svg-polyline)."""
    if isinstance(obj, PhaseGrid):
        if fmt == "csv":
            return _write_grid_csv(obj, path)
        if fmt == "json":
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(obj.to_dict(), fh, indent=2)
                fh.write("\n")
            return None
        if fmt == "svg-polyline":
            return _write_svg(contour50(obj), path)
    elif isinstance(obj, dict):
        if fmt == "csv":
            return _write_curves_csv(obj, path)
        if fmt == "json":
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(_curves_json(obj), fh, indent=2)
                fh.write("\n")
            return None
        if fmt == "svg-polyline":
            return _write_svg(obj, path)
    raise ValueError(f"cannot emit {type(obj).__name__} as {fmt!r}")


def load_grid(path) -> PhaseGrid:
    with open(path, encoding="utf-8") as fh:
        return PhaseGrid.from_dict(json.load(fh))
