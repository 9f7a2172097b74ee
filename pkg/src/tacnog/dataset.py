"""Training data from a q-grid sweep.

Every grid point q in [-p_max, p_max]^3 is propagated backward over [0, T];
it contributes the pair (Z(T, q), U(T, q)) only if the extremal passes both
optimality filters.  Records keep their q so any of them can be replayed.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Iterator

import numpy as np

from .extremal import (
    DEFAULT_STEP,
    CostateParams,
    PropagationDiverged,
    check_colinearity_free,
    check_disconjugacy,
    propagate_extremal,
)
from .frames import EngagementState, wrap_angle

HEADER = ["X", "Y", "Theta", "U", "px", "py", "c0"]


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    p_max: float
    step_q: float
    T: float = 1.5
    h: float = DEFAULT_STEP
    out: str | None = None

    def __post_init__(self):
        if not (self.p_max >= 0 and self.step_q > 0 and self.T > 0 and 0 < self.h <= self.T):
            raise ValueError(f"invalid sweep config {self}")
        if self.p_max > 0 and self.step_q > 2 * self.p_max:
            raise ValueError(f"step {self.step_q} exceeds the grid width {2 * self.p_max}")

    def axis(self) -> np.ndarray:
        """Grid values along one axis, both endpoints included."""
        n = int(math.floor(2 * self.p_max / self.step_q + 1e-9))
        return -self.p_max + self.step_q * np.arange(n + 1)

    @property
    def grid_size(self) -> int:
        return len(self.axis()) ** 3


@dataclass(frozen=True)
class DatasetRecord:
    X: float
    Y: float
    Theta: float
    U: float
    q: CostateParams
    # in memory only; the CSV keeps its seven columns
    effort: float = field(default=math.nan, compare=False)

    @property
    def state(self) -> tuple[float, float, float]:
        return (self.X, self.Y, self.Theta)


@dataclass
class SweepStats:
    total: int = 0
    accepted: int = 0
    rejected_disconjugacy: int = 0
    rejected_colinear: int = 0
    diverged: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


ACCEPTED, REJ_DCJ, REJ_COL, DIVERGED = "accepted", "disconjugacy", "colinear", "diverged"


def evaluate_q(q: CostateParams, T: float, h: float) -> tuple[str, DatasetRecord | None]:
    """Classify one grid point; disconjugacy is tested first."""
    try:
        traj = propagate_extremal(q, T, h, filters=False)
    except PropagationDiverged:
        return DIVERGED, None
    if not check_disconjugacy(traj):
        return REJ_DCJ, None
    if not check_colinearity_free(traj):
        return REJ_COL, None
    X, Y, th = traj.terminal
    return ACCEPTED, DatasetRecord(
        float(X), float(Y), wrap_angle(th), float(traj.U[-1]), q, traj.effort
    )


def _eval_chunk(args):
    qs, T, h = args
    return [evaluate_q(CostateParams(*q), T, h) for q in qs]


def _grid(cfg: SweepConfig) -> Iterator[tuple[float, float, float]]:
    ax = [float(v) for v in cfg.axis()]
    # lexicographic in (p_x, p_y, c_0) grid indices
    return itertools.product(ax, ax, ax)


def iter_sweep(cfg: SweepConfig, workers: int = 1, chunk: int = 512):
    """Yield (status, record) per grid point in grid order, whatever the
    worker count."""
    grid = _grid(cfg)
    jobs = iter(lambda: list(itertools.islice(grid, chunk)), [])
    if workers <= 1:
        for qs in jobs:
            yield from _eval_chunk((qs, cfg.T, cfg.h))
        return
    with Pool(workers) as pool:
        for out in pool.imap(_eval_chunk, ((qs, cfg.T, cfg.h) for qs in jobs)):
            yield from out


def generate_dataset(
    cfg: SweepConfig, workers: int = 1, progress=None
) -> tuple[list[DatasetRecord], SweepStats]:
    stats = SweepStats()
    records: list[DatasetRecord] = []
    for status, rec in iter_sweep(cfg, workers):
        stats.total += 1
        if status == ACCEPTED:
            stats.accepted += 1
            records.append(rec)
        elif status == REJ_DCJ:
            stats.rejected_disconjugacy += 1
        elif status == REJ_COL:
            stats.rejected_colinear += 1
        else:
            stats.diverged += 1
        if progress is not None and stats.total % 10000 == 0:
            progress(stats)
    if cfg.out is not None:
        write_dataset(records, cfg.out)
    return records, stats


def write_dataset(records, path) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(HEADER)
        for r in records:
            w.writerow(
                [f"{v:.17g}" for v in (r.X, r.Y, r.Theta, r.U, r.q.p_x, r.q.p_y, r.q.c_0)]
            )


def read_dataset(path) -> list[DatasetRecord]:
    out = []
    with open(Path(path), newline="") as f:
        rows = csv.reader(f)
        header = next(rows, None)
        if header != HEADER:
            raise DatasetFormatError(f"line 1: expected header {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(HEADER):
                raise DatasetFormatError(f"line {lineno}: expected 7 fields, got {len(row)}")
            try:
                v = [float(x) for x in row]
            except ValueError as e:
                raise DatasetFormatError(f"line {lineno}: {e}") from None
            if not all(math.isfinite(x) for x in v):
                raise DatasetFormatError(f"line {lineno}: non-finite value")
            out.append(DatasetRecord(v[0], v[1], v[2], v[3], CostateParams(v[4], v[5], v[6])))
    return out


def as_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(states (n, 3), controls (n,), q (n, 3))."""
    if not records:
        return np.empty((0, 3)), np.empty(0), np.empty((0, 3))
    Z = np.array([r.state for r in records], dtype=float)
    U = np.array([r.U for r in records], dtype=float)
    Q = np.array([(r.q.p_x, r.q.p_y, r.q.c_0) for r in records], dtype=float)
    return Z, U, Q


def record_efforts(records, T: float, h: float = DEFAULT_STEP) -> np.ndarray:
    """Extremal effort per record, re-propagating where it is not cached."""
    out = np.empty(len(records))
    for k, r in enumerate(records):
        e = r.effort
        if not math.isfinite(e):
            e = propagate_extremal(r.q, T, h, filters=False).effort
        out[k] = e
    return out


def prune_dominated(
    records,
    T: float,
    h: float = DEFAULT_STEP,
    radius: float = 0.25,
    max_tries: int = 3,
    rel_margin: float = 1e-6,
    screen: float = 0.01,
    neighbours: int = 32,
) -> list[DatasetRecord]:
    """Drop records that are provably not globally optimal.

    Both filters certify local optimality only, so one state can be reached
    by several accepted extremals of different cost and the labels then
    disagree.  A record a is dropped only when shooting from its state,
    warm-started at a neighbour's q, converges to a trajectory that reaches
    the target strictly more cheaply than a's own extremal; that cheaper
    trajectory is the certificate.

    Neighbours (the ``neighbours`` nearest within ``radius`` in x, y,
    cos theta, sin theta) are ranked by a first-order prediction of the
    optimal cost at z_a,
    J_b + (p_x, p_y, U)_b . (z_b - z_a) (the value gradient along an optimal
    extremal is -(p_x, p_y, U) at its start).  Only neighbours predicting a
    saving above ``screen`` * J_a are tried, at most ``max_tries`` of them;
    the screen affects run time and recall, never soundness.  Input order is
    preserved.
    """
    from scipy.spatial import cKDTree

    from .shooting import ShootingProblem, solve

    records = list(records)
    if len(records) < 2:
        return records
    J = record_efforts(records, T, h)
    Z, U, Q = as_arrays(records)
    G = np.column_stack([Q[:, 0], Q[:, 1], U])
    emb = np.column_stack([Z[:, 0], Z[:, 1], np.cos(Z[:, 2]), np.sin(Z[:, 2])])
    # bounded k-NN rather than all pairs: dense sweeps have millions of pairs per radius
    k = min(neighbours + 1, len(records))
    dist, idx = cKDTree(emb).query(emb, k=k, distance_upper_bound=radius)
    a = np.repeat(np.arange(len(records)), k)
    b = idx.reshape(-1)
    ok = np.isfinite(dist.reshape(-1)) & (b != a)
    a, b = a[ok], b[ok]
    dz = Z[a] - Z[b]
    dz[:, 2] = wrap_angle(dz[:, 2])
    pred = J[b] - np.einsum("ij,ij->i", G[b], dz)
    hit = pred < J[a] - np.maximum(screen * J[a], rel_margin * np.maximum(1.0, J[a]))
    a, b, pred = a[hit], b[hit], pred[hit]
    order = np.lexsort((pred, a))
    a, b = a[order], b[order]
    keep = np.ones(len(records), dtype=bool)
    starts = np.flatnonzero(np.r_[True, a[1:] != a[:-1]]) if a.size else []
    for s0, s1 in zip(starts, list(starts[1:]) + [a.size]):
        i = a[s0]
        z = EngagementState.from_array(Z[i])
        for j in b[s0 : min(s1, s0 + max_tries)]:
            res = solve(ShootingProblem(z, T, records[j].q, tol=1e-8, max_iter=30, h=h), filters=False)
            if res.converged and res.effort < J[i] - rel_margin * max(1.0, J[i]):
                keep[i] = False
                break
    return [r for r, k in zip(records, keep) if k]


@dataclass
class ReplayReport:
    checked: int = 0
    max_state_error: float = 0.0
    max_control_error: float = 0.0
    refined_disconjugacy_failures: list = field(default_factory=list)
    refined_colinear_failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.refined_disconjugacy_failures or self.refined_colinear_failures)


def replay(
    records, T: float, h: float = DEFAULT_STEP, refine: int = 10, check_colinear: bool = False
) -> ReplayReport:
    """Re-propagate each record's q: the stored (state, control) must be
    reproduced, and delta must keep its sign at step h / refine."""
    rep = ReplayReport()
    for r in records:
        traj = propagate_extremal(r.q, T, h, filters=False)
        X, Y, th = traj.terminal
        err = max(abs(X - r.X), abs(Y - r.Y), abs(wrap_angle(th - r.Theta)))
        rep.max_state_error = max(rep.max_state_error, err)
        rep.max_control_error = max(rep.max_control_error, abs(float(traj.U[-1]) - r.U))
        if refine:
            fine = propagate_extremal(r.q, T, h / refine, filters=False)
            if not check_disconjugacy(fine, eps_t=10 * h):
                rep.refined_disconjugacy_failures.append(r.q)
            if check_colinear and not check_colinearity_free(fine):
                rep.refined_colinear_failures.append(r.q)
        rep.checked += 1
    return rep
