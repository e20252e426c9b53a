"""Integer displacement by dynamic programming over joint (axial, lateral)
sample shifts.

Each column is solved to optimality along depth: the unary cost is the SSD
of a short axial patch under the candidate shift, pairwise costs penalize
the L1 label change between consecutive depth samples, and columns after the
seed add an L1 tie to the already-solved neighbor column.  Ties break toward
the smallest-magnitude shift, axial before lateral, so output is fully
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .geometry import DisplacementField, RfFrame


@dataclass(frozen=True)
class DpConfig:
    axial_range: int
    lateral_range: int
    smoothness_weight: float = 0.15
    patch_half: int = 3
    seed_column: Optional[int] = None
    column_step: int = 1

    def __post_init__(self):
        if self.axial_range < 0 or self.lateral_range < 0:
            raise ValueError("search ranges must be non-negative")
        if self.smoothness_weight < 0:
            raise ValueError("smoothness weight must be non-negative")
        if self.patch_half < 1:
            raise ValueError("patch half-extent must be at least 1")
        if self.column_step < 1:
            raise ValueError("column step must be at least 1")

    @classmethod
    def for_max_strain(cls, nz: int, nx: int, max_strain: float = 0.05, **kwargs) -> "DpConfig":
        """Search ranges sized for a maximum expected strain."""
        return cls(
            axial_range=int(math.ceil(2 * max_strain * nz)),
            lateral_range=int(math.ceil(max_strain * nx)),
            **kwargs,
        )


def _canonical_labels(axial_range: int, lateral_range: int):
    """Labels ordered so the first cost tie encountered wins the tie rule:
    smallest |axial|, then smallest |lateral|, then sign."""
    labels = [
        (da, dl)
        for da in range(-axial_range, axial_range + 1)
        for dl in range(-lateral_range, lateral_range + 1)
    ]
    labels.sort(key=lambda t: (abs(t[0]), abs(t[1]), t[0], t[1]))
    la = np.array([t[0] for t in labels], dtype=np.int64)
    ll = np.array([t[1] for t in labels], dtype=np.int64)
    return la, ll


@njit(cache=True)
def _dp_column(img1, img2, col, r0, r1, la, ll, pair_cost, w, has_prev,
               prev_a, prev_l, patch_half, out_a, out_l):
    """Optimal labeling of one column given (optionally) the neighbor
    column's solution; rows outside [r0, r1) are untouched."""
    n_rows = r1 - r0
    n_lab = la.shape[0]
    unary = np.empty((n_rows, n_lab))
    for r in range(n_rows):
        i = r0 + r
        for s in range(n_lab):
            da = la[s]
            dl = ll[s]
            ssd = 0.0
            for k in range(-patch_half, patch_half + 1):
                d = img1[i + k, col] - img2[i + k + da, col + dl]
                ssd += d * d
            cost = ssd
            if has_prev:
                cost += w * (abs(da - prev_a[r]) + abs(dl - prev_l[r]))
            unary[r, s] = cost

    acc = np.empty((n_rows, n_lab))
    for s in range(n_lab):
        acc[0, s] = unary[0, s]
    for r in range(1, n_rows):
        for s in range(n_lab):
            best = acc[r - 1, 0] + pair_cost[s, 0]
            for t in range(1, n_lab):
                c = acc[r - 1, t] + pair_cost[s, t]
                if c < best:
                    best = c
            acc[r, s] = unary[r, s] + best

    # backtrace; canonical label order makes strict < implement the tie rule
    s_best = 0
    for s in range(1, n_lab):
        if acc[n_rows - 1, s] < acc[n_rows - 1, s_best]:
            s_best = s
    out_a[n_rows - 1] = la[s_best]
    out_l[n_rows - 1] = ll[s_best]
    for r in range(n_rows - 2, -1, -1):
        t_best = 0
        best = acc[r, 0] + pair_cost[s_best, 0]
        for t in range(1, n_lab):
            c = acc[r, t] + pair_cost[s_best, t]
            if c < best:
                best = c
                t_best = t
        s_best = t_best
        out_a[r] = la[s_best]
        out_l[r] = ll[s_best]


def dp_integer_displacement(I1: RfFrame, I2: RfFrame, config: DpConfig) -> DisplacementField:
    """Integer (axial, lateral) shift per node; sub-sample parts are zero.

    Nodes whose patch or shifted patch can leave the frame for some label,
    or that touch invalid frame nodes, are marked invalid.  With
    ``column_step > 1`` only every step-th column is solved and results are
    replicated to the skipped columns (integer labels are in sample units,
    so a denser lateral grid adds no information at this stage).
    """
    if I1.grid.shape != I2.grid.shape:
        raise ValueError("frames must share dimensions")
    nz, nx = I1.grid.shape
    A, L = config.axial_range, config.lateral_range
    ph = config.patch_half

    r0, r1 = ph + A, nz - ph - A
    c0, c1 = L, nx - L
    if r1 <= r0 or c1 <= c0:
        raise ValueError(
            f"search range ({A}, {L}) plus patch {ph} leaves no interior in {nz}x{nx} frame"
        )

    seed = config.seed_column if config.seed_column is not None else nx // 2
    if not c0 <= seed < c1:
        raise ValueError(f"seed column {seed} outside searchable interior [{c0}, {c1})")

    la, ll = _canonical_labels(A, L)
    pair_cost = config.smoothness_weight * (
        np.abs(la[:, None] - la[None, :]) + np.abs(ll[:, None] - ll[None, :])
    ).astype(np.float64)

    img1 = np.ascontiguousarray(I1.values)
    img2 = np.ascontiguousarray(I2.values)

    cols_right = list(range(seed, c1, config.column_step))
    cols_left = list(range(seed - config.column_step, c0 - 1, -config.column_step))

    a_sol = {}
    l_sol = {}
    n_rows = r1 - r0
    empty = np.zeros(n_rows, dtype=np.int64)

    def solve_column(col, prev):
        out_a = np.empty(n_rows, dtype=np.int64)
        out_l = np.empty(n_rows, dtype=np.int64)
        has_prev = prev is not None
        _dp_column(
            img1, img2, col, r0, r1, la, ll, pair_cost,
            config.smoothness_weight, has_prev,
            prev[0] if has_prev else empty, prev[1] if has_prev else empty,
            ph, out_a, out_l,
        )
        a_sol[col] = out_a
        l_sol[col] = out_l
        return out_a, out_l

    prev = None
    for col in cols_right:
        prev = solve_column(col, prev)
    prev = (a_sol[seed], l_sol[seed])
    for col in cols_left:
        prev = solve_column(col, prev)

    solved_cols = np.array(sorted(a_sol), dtype=np.int64)
    axial = np.full((nz, nx), np.nan)
    lateral = np.full((nz, nx), np.nan)
    valid = np.zeros((nz, nx), dtype=bool)
    frame_ok = I1.valid_mask() & I2.valid_mask()

    for col in range(c0, c1):
        nearest = solved_cols[np.argmin(np.abs(solved_cols - col))]
        axial[r0:r1, col] = a_sol[nearest]
        lateral[r0:r1, col] = l_sol[nearest]
        valid[r0:r1, col] = True

    # drop nodes whose worst-case patch touches invalid frame nodes
    if not frame_ok.all():
        from scipy.ndimage import binary_erosion

        footprint = np.ones((2 * (ph + A) + 1, 2 * L + 1), dtype=bool)
        valid &= binary_erosion(frame_ok, structure=footprint, border_value=False)
        axial[~valid] = np.nan
        lateral[~valid] = np.nan

    zero_sub = np.where(valid, 0.0, np.nan)
    return DisplacementField(
        axial_int=axial,
        lateral_int=lateral,
        axial_sub=zero_sub,
        lateral_sub=zero_sub.copy(),
        valid=valid,
    )
