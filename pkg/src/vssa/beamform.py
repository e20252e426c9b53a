"""Delay-and-sum beamforming in three modes.

* sa: every event is a single-element transmit; two-way delay per Eq.-style
  geometric paths from transmitter and receiver to the node.
* line_by_line: focused transmits, each reconstructing only the image column
  on its beam axis with dynamic receive focusing.
* vssa: focused transmits treated as virtual sources at their focal points,
  beamformed synthetic-aperture style on an arbitrary grid.  The +- branch of
  the virtual-source delay splits the image at the focal depth, which is why
  a region policy crops nodes around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.signal
from numba import njit, prange

from .geometry import (
    ChannelDataSet,
    FocusedTx,
    ImageGrid,
    ProbeGeometry,
    RfFrame,
    SingleElementTx,
)

MODES = ("sa", "line_by_line", "vssa")
APODIZATIONS = ("rectangular", "hann")
REGION_POLICIES = ("above_only", "below_only", "both_with_crop")


@dataclass(frozen=True)
class BeamformConfig:
    """Beamforming controls.

    The receive aperture grows with depth, limited to ``z / f_number`` width
    and weighted by the chosen apodization window (hann by default, which
    keeps boundary receivers near zero weight and the point response
    stable).  Fractional-sample lookups are linear.  ``vssa_region_policy``
    marks nodes near the focal depth invalid: "above_only" keeps z <= z_f -
    margin, "below_only" keeps z >= z_f + margin, "both_with_crop" drops
    only the band within +-margin.
    """

    mode: str = "vssa"
    receive_apodization: str = "hann"
    f_number: float = 1.5
    interpolation: str = "linear"
    vssa_region_policy: str = "below_only"
    crop_margin: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.receive_apodization not in APODIZATIONS:
            raise ValueError(f"apodization must be one of {APODIZATIONS}")
        if self.interpolation != "linear":
            raise ValueError("only linear fractional-sample interpolation is supported")
        if self.vssa_region_policy not in REGION_POLICIES:
            raise ValueError(f"region policy must be one of {REGION_POLICIES}")
        if self.f_number <= 0:
            raise ValueError("f_number must be positive")
        if self.crop_margin < 0:
            raise ValueError("crop margin must be non-negative")


def sa_delay(geometry: ProbeGeometry, i: int, j: int, p) -> float:
    """Two-way travel time for transmit element i, receive element j, and
    image point p = (x, z)."""
    x = geometry.element_x_positions
    xp, zp = p
    if zp < 0:
        raise ValueError("image point must have non-negative depth")
    tx = math.hypot(xp - x[i], zp)
    rx = math.hypot(xp - x[j], zp)
    return (tx + rx) / geometry.sound_speed


def vssa_delay(geometry: ProbeGeometry, f, j: int, p) -> float:
    """Virtual-source travel time: the wavefront reaches the focus f at
    z_f / c and propagates spherically from it; the sign of the spherical
    term flips above versus below the focal depth (the + branch applies at
    z_p == z_f)."""
    xf, zf = f
    xp, zp = p
    if zf <= 0:
        raise ValueError("virtual source must sit at positive depth")
    x = geometry.element_x_positions
    spherical = math.hypot(xp - xf, zf - zp)
    tx = zf - spherical if zp < zf else zf + spherical
    rx = math.hypot(x[j] - xp, zp)
    return (tx + rx) / geometry.sound_speed


@njit(cache=True, inline="always")
def _apod_weight(off, half_ap, kind):
    if half_ap <= 0.0 or off > half_ap:
        return 0.0
    if kind == 0:
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * off / half_ap))


@njit(cache=True, inline="always")
def _sample_lerp(stream, s):
    i0 = int(math.floor(s))
    if i0 < 0 or i0 >= stream.shape[0] - 1:
        return 0.0
    f = s - i0
    return stream[i0] * (1.0 - f) + stream[i0 + 1] * f


@njit(cache=True, parallel=True)
def _das_sa(out, samples, elem_x, tx_x, xs, zs, t0, fs, c, fnum, apod):
    nz, nx = out.shape
    n_ev, n_rx, _ = samples.shape
    for iz in prange(nz):
        zp = zs[iz]
        half_ap = zp / (2.0 * fnum)
        for ix in range(nx):
            xp = xs[ix]
            acc = 0.0
            for ev in range(n_ev):
                d_tx = math.sqrt((xp - tx_x[ev]) ** 2 + zp * zp)
                for j in range(n_rx):
                    off = abs(elem_x[j] - xp)
                    w = _apod_weight(off, half_ap, apod)
                    if w == 0.0:
                        continue
                    t = (d_tx + math.sqrt((xp - elem_x[j]) ** 2 + zp * zp)) / c
                    acc += w * _sample_lerp(samples[ev, j], (t - t0) * fs)
            out[iz, ix] = acc


@njit(cache=True, parallel=True)
def _das_vssa(out, samples, elem_x, fx, fz, xs, zs, t0, fs, c, fnum, apod):
    nz, nx = out.shape
    n_ev, n_rx, _ = samples.shape
    for iz in prange(nz):
        zp = zs[iz]
        half_ap = zp / (2.0 * fnum)
        for ix in range(nx):
            xp = xs[ix]
            acc = 0.0
            for ev in range(n_ev):
                spherical = math.sqrt((xp - fx[ev]) ** 2 + (fz[ev] - zp) ** 2)
                d_tx = fz[ev] - spherical if zp < fz[ev] else fz[ev] + spherical
                for j in range(n_rx):
                    off = abs(elem_x[j] - xp)
                    w = _apod_weight(off, half_ap, apod)
                    if w == 0.0:
                        continue
                    t = (d_tx + math.sqrt((elem_x[j] - xp) ** 2 + zp * zp)) / c
                    acc += w * _sample_lerp(samples[ev, j], (t - t0) * fs)
            out[iz, ix] = acc


@njit(cache=True, parallel=True)
def _das_lbl(out, samples, elem_x, cols, xs, zs, t0, fs, c, fnum, apod):
    nz, _ = out.shape
    n_ev, n_rx, _ = samples.shape
    for iz in prange(nz):
        zp = zs[iz]
        half_ap = zp / (2.0 * fnum)
        for ev in range(n_ev):
            col = cols[ev]
            if col < 0:
                continue
            xp = xs[col]
            acc = 0.0
            for j in range(n_rx):
                off = abs(elem_x[j] - xp)
                w = _apod_weight(off, half_ap, apod)
                if w == 0.0:
                    continue
                # transmit wavefront passes depth z on the beam axis at z/c
                t = zp / c + math.sqrt((elem_x[j] - xp) ** 2 + zp * zp) / c
                acc += w * _sample_lerp(samples[ev, j], (t - t0) * fs)
            out[iz, col] += acc


def _require_event_kind(data: ChannelDataSet, kind, mode: str):
    for ev in data.events:
        if not isinstance(ev, kind):
            raise ValueError(
                f"{mode} beamforming needs {kind.__name__} events, got {type(ev).__name__}"
            )


def _vssa_valid_mask(grid: ImageGrid, focal_depths, policy: str, margin: float):
    z = grid.z_coords()
    valid = np.ones(grid.nz, dtype=bool)
    for zf in focal_depths:
        if policy == "above_only":
            valid &= z <= zf - margin
        elif policy == "below_only":
            valid &= z >= zf + margin
        else:
            valid &= np.abs(z - zf) >= margin
    return np.repeat(valid[:, None], grid.nx, axis=1)


def das_beamform(data: ChannelDataSet, grid: ImageGrid, config: BeamformConfig) -> RfFrame:
    """Delay-and-sum the channel data onto the grid.

    Each node sums apodized, linearly interpolated samples over every
    (event, receiver) pair in a fixed order; samples requested outside the
    recorded window contribute zero.  In vssa mode the region policy marks
    nodes around the focal depth invalid (values are still computed).
    """
    geom = data.geometry
    out = np.zeros(grid.shape)
    xs = grid.x_coords()
    zs = grid.z_coords()
    apod = APODIZATIONS.index(config.receive_apodization)
    args = (data.samples, geom.element_x_positions, xs, zs, data.t0,
            geom.sampling_frequency, geom.sound_speed, config.f_number, apod)

    if config.mode == "sa":
        _require_event_kind(data, SingleElementTx, "sa")
        tx_x = np.array([geom.element_x_positions[ev.element] for ev in data.events])
        _das_sa(out, args[0], args[1], tx_x, *args[2:])
        return RfFrame(grid=grid, values=out)

    _require_event_kind(data, FocusedTx, config.mode)
    fx = np.array([ev.focal_x for ev in data.events])
    fz = np.array([ev.focal_z for ev in data.events])

    if config.mode == "line_by_line":
        cols = np.rint((fx - grid.x0) / grid.dx).astype(np.int64)
        cols[(cols < 0) | (cols >= grid.nx)] = -1
        _das_lbl(out, args[0], args[1], cols, *args[2:])
        return RfFrame(grid=grid, values=out)

    _das_vssa(out, args[0], args[1], fx, fz, *args[2:])
    mask = _vssa_valid_mask(grid, sorted(set(fz.tolist())),
                            config.vssa_region_policy, config.crop_margin)
    return RfFrame(grid=grid, values=out, valid=None if mask.all() else mask)


def envelope(frame: RfFrame) -> RfFrame:
    """Per-column analytic-signal magnitude (FFT-based axial Hilbert
    transform), for point-spread measurements and B-mode display."""
    if frame.grid.nz < 4:
        raise ValueError(f"envelope needs at least 4 axial samples, got {frame.grid.nz}")
    analytic = scipy.signal.hilbert(frame.values, axis=0)
    return RfFrame(grid=frame.grid, values=np.abs(analytic), valid=frame.valid)
