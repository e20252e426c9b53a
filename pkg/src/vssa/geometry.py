"""Shared domain types: probe geometry, imaging grids, transmit events,
channel data, beamformed frames, and displacement/strain fields.

Coordinate convention: the probe face sits at ``z = 0`` with depth increasing
downward, and the array is centered on ``x = 0``.  All positions are in
meters, all times in seconds.  Invalid nodes in displacement/strain fields
are flagged with NaN and excluded through the boolean mask, never by value
testing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class ProbeGeometry:
    """Linear array description; defines every delay computation.

    Attributes:
        element_count: number of piezo elements (>= 2).
        pitch: element center-to-center spacing in meters.
        center_frequency: RF carrier frequency in Hz.
        sampling_frequency: RF sampling rate in Hz (must exceed Nyquist).
        sound_speed: propagation speed in m/s (1540 is the usual soft-tissue
            value).
    """

    element_count: int
    pitch: float
    center_frequency: float
    sampling_frequency: float
    sound_speed: float = 1540.0

    def __post_init__(self):
        if self.element_count < 2:
            raise ValueError(f"element_count must be >= 2, got {self.element_count}")
        if self.pitch <= 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.sound_speed <= 0:
            raise ValueError(f"sound_speed must be positive, got {self.sound_speed}")
        if self.sampling_frequency <= 2 * self.center_frequency:
            raise ValueError(
                "sampling_frequency must exceed twice the center frequency "
                f"({self.sampling_frequency} <= 2 * {self.center_frequency})"
            )

    @property
    def element_x_positions(self) -> np.ndarray:
        """Lateral element coordinates, centered so the array midpoint is x = 0."""
        idx = np.arange(self.element_count, dtype=np.float64)
        return (idx - (self.element_count - 1) / 2.0) * self.pitch

    @property
    def aperture_width(self) -> float:
        return self.element_count * self.pitch

    def grid_spacing(self) -> float:
        """Node spacing c / (2 fs): one axial sample of round-trip travel."""
        return self.sound_speed / (2.0 * self.sampling_frequency)


def _axis_nodes(start: float, stop: float, step: float) -> int:
    """Node count so nodes cover [start, stop]: last node > stop - step."""
    if not stop > start:
        raise ValueError(f"empty or inverted extent [{start}, {stop}]")
    # tiny relative slack so an extent that is an exact multiple of step
    # keeps its endpoint node despite float rounding
    return int(np.floor((stop - start) / step * (1 + 1e-12))) + 1


@dataclass(frozen=True)
class ImageGrid:
    """Rectangular beamforming grid; node (iz, ix) sits at
    (x0 + ix*dx, z0 + iz*dz)."""

    x0: float
    z0: float
    dx: float
    dz: float
    nx: int
    nz: int

    def __post_init__(self):
        if self.dx <= 0 or self.dz <= 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 1 or self.nz < 1:
            raise ValueError("grid must have at least one node per axis")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nz, self.nx)

    def x_coords(self) -> np.ndarray:
        return self.x0 + np.arange(self.nx, dtype=np.float64) * self.dx

    def z_coords(self) -> np.ndarray:
        return self.z0 + np.arange(self.nz, dtype=np.float64) * self.dz

    def col_range(self, x_lo: float, x_hi: float) -> tuple[int, int]:
        """Half-open column index range covering [x_lo, x_hi]."""
        x = self.x_coords()
        sel = np.nonzero((x >= x_lo) & (x <= x_hi))[0]
        if sel.size == 0:
            raise ValueError(f"no grid columns inside [{x_lo}, {x_hi}]")
        return int(sel[0]), int(sel[-1]) + 1

    def row_range(self, z_lo: float, z_hi: float) -> tuple[int, int]:
        """Half-open row index range covering [z_lo, z_hi]."""
        z = self.z_coords()
        sel = np.nonzero((z >= z_lo) & (z <= z_hi))[0]
        if sel.size == 0:
            raise ValueError(f"no grid rows inside [{z_lo}, {z_hi}]")
        return int(sel[0]), int(sel[-1]) + 1


def make_hf_grid(geometry: ProbeGeometry, x_extent, z_extent) -> ImageGrid:
    """Grid with equal axial/lateral node spacing c/(2 fs).

    The equal spacing lets lateral displacement be estimated with the same
    sample density as axial displacement, without interpolation.
    """
    spacing = geometry.grid_spacing()
    x0, x1 = float(x_extent[0]), float(x_extent[1])
    z0, z1 = float(z_extent[0]), float(z_extent[1])
    if z0 < 0:
        raise ValueError(f"z extent must lie at positive depth, got start {z0}")
    nx = _axis_nodes(x0, x1, spacing)
    nz = _axis_nodes(z0, z1, spacing)
    return ImageGrid(x0=x0, z0=z0, dx=spacing, dz=spacing, nx=nx, nz=nz)


def make_lf_grid(geometry: ProbeGeometry, z_extent) -> ImageGrid:
    """Grid with one lateral column per array element (pitch spacing) and
    axial spacing c/(2 fs)."""
    spacing = geometry.grid_spacing()
    z0, z1 = float(z_extent[0]), float(z_extent[1])
    if z0 < 0:
        raise ValueError(f"z extent must lie at positive depth, got start {z0}")
    nz = _axis_nodes(z0, z1, spacing)
    x = geometry.element_x_positions
    return ImageGrid(
        x0=float(x[0]), z0=z0, dx=geometry.pitch, dz=spacing,
        nx=geometry.element_count, nz=nz,
    )


@dataclass(frozen=True)
class SingleElementTx:
    """One element transmits; the classic synthetic-aperture event."""

    element: int
    weight: float = 1.0


@dataclass(frozen=True)
class FocusedTx:
    """A sub-aperture transmits with delays that make all wavefronts
    coincide at the focal point.

    The firing delay of aperture element k is (z_f - |focus - elem_k|)/c, so
    the wavefront passes the focus at t = z_f / c.  That reference is what
    lets the focus act as a virtual source whose field at depth z arrives at
    (z_f +- |p - focus|)/c.
    """

    elements: np.ndarray  # element indices, ascending
    focal_x: float
    focal_z: float
    weights: Optional[np.ndarray] = None  # per-element, default uniform

    def __post_init__(self):
        elems = np.asarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "elements", elems)
        if elems.size < 1:
            raise ValueError("focused transmit needs at least one element")
        if self.focal_z <= 0:
            raise ValueError(f"focal depth must be positive, got {self.focal_z}")
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones(elems.size))
        else:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != elems.shape:
                raise ValueError("weights must match aperture element count")
            object.__setattr__(self, "weights", w)


TransmitEvent = Union[SingleElementTx, FocusedTx]


def validate_event(event: TransmitEvent, geometry: ProbeGeometry) -> None:
    if isinstance(event, SingleElementTx):
        if not 0 <= event.element < geometry.element_count:
            raise ValueError(f"transmit element {event.element} out of range")
    elif isinstance(event, FocusedTx):
        if event.elements.min() < 0 or event.elements.max() >= geometry.element_count:
            raise ValueError("focused aperture indices out of range")
    else:
        raise TypeError(f"unknown transmit event type {type(event)!r}")


@dataclass(frozen=True)
class ChannelDataSet:
    """Per-event, per-receive-element RF time series.

    samples has shape [n_events, n_elements, n_time]; t0 is the time of the
    first sample, shared by all events.
    """

    geometry: ProbeGeometry
    events: tuple
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        s = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", s)
        if s.ndim != 3:
            raise ValueError(f"samples must be 3-D, got shape {s.shape}")
        n_ev, n_rx, n_t = s.shape
        if n_ev != len(self.events):
            raise ValueError("event count does not match samples")
        if n_rx != self.geometry.element_count:
            raise ValueError("receiver count does not match element count")
        if n_t < 1:
            raise ValueError("need at least one time sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("channel data contains non-finite samples")
        for ev in self.events:
            validate_event(ev, self.geometry)

    @property
    def n_time(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class RfFrame:
    """Beamformed RF image on a grid.  ``valid`` is None when every node is
    usable; otherwise a boolean mask (values stay finite either way)."""

    grid: ImageGrid
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("frame contains non-finite values")
        if self.valid is not None:
            m = np.asarray(self.valid, dtype=bool)
            if m.shape != v.shape:
                raise ValueError("valid mask shape mismatch")
            object.__setattr__(self, "valid", m)

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.valid


@dataclass(frozen=True)
class DisplacementField:
    """Integer + sub-sample displacement per grid node, in sample units.

    Integer parts are stored as float arrays holding integral values so that
    invalid nodes can carry the NaN sentinel.  ``valid`` is the authoritative
    mask; consumers must never test values for NaN instead of the mask.
    """

    axial_int: np.ndarray
    lateral_int: np.ndarray
    axial_sub: np.ndarray
    lateral_sub: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        arrs = {}
        shape = None
        for name in ("axial_int", "lateral_int", "axial_sub", "lateral_sub"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            arrs[name] = a
            if shape is None:
                shape = a.shape
            elif a.shape != shape:
                raise ValueError("displacement arrays must share one shape")
        m = np.asarray(self.valid, dtype=bool)
        if m.shape != shape:
            raise ValueError("valid mask shape mismatch")
        for name, a in arrs.items():
            if np.any(~np.isfinite(a[m])):
                raise ValueError(f"{name} has non-finite entries on valid nodes")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "valid", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def total_axial(self) -> np.ndarray:
        return self.axial_int + self.axial_sub

    def total_lateral(self) -> np.ndarray:
        return self.lateral_int + self.lateral_sub

    @staticmethod
    def zeros(shape) -> "DisplacementField":
        z = np.zeros(shape)
        return DisplacementField(z, z.copy(), z.copy(), z.copy(), np.ones(shape, bool))

    @staticmethod
    def invalid_outside(field: "DisplacementField", mask: np.ndarray) -> "DisplacementField":
        """Copy with validity restricted to ``mask``; masked-out entries NaN."""
        m = field.valid & mask
        out = []
        for a in (field.axial_int, field.lateral_int, field.axial_sub, field.lateral_sub):
            b = a.copy()
            b[~m] = np.nan
            out.append(b)
        return DisplacementField(*out, valid=m)


@dataclass(frozen=True)
class StrainField:
    """Unitless strain maps per node; NaN where the source displacement was
    invalid or the fit window was too short.

    A least-squares differentiation fills one direction and leaves the other
    None; analytic ground truth fills both.  The sign convention is chosen so
    compression produces positive maps in both directions.
    """

    axial_strain: Optional[np.ndarray]
    lateral_strain: Optional[np.ndarray]
    valid: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        m = np.asarray(self.valid, dtype=bool)
        object.__setattr__(self, "valid", m)
        any_set = False
        for name in ("axial_strain", "lateral_strain"):
            a = getattr(self, name)
            if a is None:
                continue
            any_set = True
            a = np.asarray(a, dtype=np.float64)
            if a.shape != m.shape:
                raise ValueError(f"{name} shape {a.shape} != mask shape {m.shape}")
            if np.any(~np.isfinite(a[m])):
                raise ValueError(f"{name} has non-finite entries on valid nodes")
            object.__setattr__(self, name, a)
        if not any_set:
            raise ValueError("strain field needs at least one direction")

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    @property
    def direction(self) -> str:
        if self.axial_strain is not None and self.lateral_strain is not None:
            return "both"
        return "axial" if self.axial_strain is not None else "lateral"

    def get(self, direction: str) -> np.ndarray:
        a = {"axial": self.axial_strain, "lateral": self.lateral_strain}[direction]
        if a is None:
            raise ValueError(f"strain field has no {direction} map")
        return a
