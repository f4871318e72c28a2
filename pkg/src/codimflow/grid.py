"""Structured parameter charts and finite-difference calculus on them.

Charts are single global coordinate patches: the periodic circle S^1, periodic
tori T^m (m = 1..3), a latitude-staggered sphere S^2, and a non-periodic
interval (used for truncated non-compact profiles). Everything downstream
consumes only the derivative and quadrature operators defined here.

Sphere handling follows the staggered-grid idiom: colatitude samples
theta_j = (j + 1/2) * pi / J carry no node at either pole, and a ghost value
across a pole at (-theta, phi) is read from the physical node at
(theta, phi + pi). For scalar functions on the sphere that rule is exact.
Components of tensors pick up a sign (-1)^{number of theta indices} under the
same reflection, so the stencil routines accept a per-component parity.

Interval charts use staggered nodes x_j = a + (j + 1/2) h and even-reflection
ghosts at both ends; derived quantities are only trustworthy away from the
ends, which callers exclude via node masks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError, UsageError

MIN_RESOLUTION = 8


class Domain(enum.Enum):
    CIRCLE = "circle"
    TORUS = "torus"
    SPHERE = "sphere"
    INTERVAL = "interval"


class AxisKind(enum.Enum):
    PERIODIC = "periodic"
    POLE = "pole"          # sphere colatitude axis, antipodal ghosts
    REFLECT = "reflect"    # interval axis, even-reflection ghosts


@dataclass(frozen=True)
class ChartSpec:
    """Discrete chart description: domain, per-axis node counts, stencil order."""

    domain: Domain
    resolution: tuple[int, ...]
    fd_order: int = 2
    interval_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolution)
        object.__setattr__(self, "resolution", res)
        if self.fd_order not in (2, 4):
            raise ConfigError(f"fd_order must be 2 or 4, got {self.fd_order}")
        for n in res:
            if n < MIN_RESOLUTION:
                raise ConfigError(
                    f"resolution below minimum {MIN_RESOLUTION}: got {n}"
                )
        if self.domain is Domain.CIRCLE and len(res) != 1:
            raise ConfigError("circle chart takes exactly one axis")
        if self.domain is Domain.TORUS and not 1 <= len(res) <= 3:
            raise ConfigError("torus chart takes 1..3 axes")
        if self.domain is Domain.SPHERE:
            if len(res) != 2:
                raise ConfigError("sphere chart takes exactly two axes (J, K)")
            if res[1] % 2 != 0:
                raise ConfigError(
                    "sphere longitude count must be even for antipodal ghosts"
                )
        if self.domain is Domain.INTERVAL:
            if len(res) != 1:
                raise ConfigError("interval chart takes exactly one axis")
            if self.interval_bounds is None:
                raise ConfigError("interval chart requires interval_bounds")
            a, b = self.interval_bounds
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ConfigError(f"bad interval bounds {self.interval_bounds}")
        elif self.interval_bounds is not None:
            raise ConfigError("interval_bounds only valid for interval charts")

    @property
    def m(self) -> int:
        return len(self.resolution)


@dataclass(frozen=True)
class Chart:
    """Realized chart: node coordinates, spacings, and axis topology."""

    spec: ChartSpec
    coords: tuple[np.ndarray, ...]
    spacings: tuple[float, ...]
    axis_kinds: tuple[AxisKind, ...]

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spec.resolution

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def fd_order(self) -> int:
        return self.spec.fd_order

    def mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to the full grid shape."""
        return list(np.meshgrid(*self.coords, indexing="ij"))

    def cell_measure(self) -> float:
        """Coordinate volume of one grid cell (product of spacings)."""
        return float(np.prod(self.spacings))

    def same_as(self, other: "Chart") -> bool:
        return (
            self.spec.domain is other.spec.domain
            and self.spec.resolution == other.spec.resolution
            and self.spec.interval_bounds == other.spec.interval_bounds
        )


@dataclass(frozen=True)
class GridField:
    """Per-node values with a fixed component count over one chart.

    values has shape chart.shape + (components,).
    """

    chart: Chart
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[:-1] != self.chart.shape:
            raise UsageError(
                f"field shape {v.shape} does not match chart {self.chart.shape} + (c,)"
            )
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[-1]


def make_chart(spec: ChartSpec) -> Chart:
    """Build node coordinates, spacings, and topology for a chart spec."""
    res = spec.resolution
    if spec.domain in (Domain.CIRCLE, Domain.TORUS):
        coords = tuple(2 * np.pi * np.arange(n) / n for n in res)
        spacings = tuple(2 * np.pi / n for n in res)
        kinds = tuple(AxisKind.PERIODIC for _ in res)
    elif spec.domain is Domain.SPHERE:
        J, K = res
        theta = (np.arange(J) + 0.5) * np.pi / J
        phi = 2 * np.pi * np.arange(K) / K
        coords = (theta, phi)
        spacings = (np.pi / J, 2 * np.pi / K)
        kinds = (AxisKind.POLE, AxisKind.PERIODIC)
    else:  # INTERVAL
        a, b = spec.interval_bounds
        n = res[0]
        h = (b - a) / n
        coords = (a + (np.arange(n) + 0.5) * h,)
        spacings = (h,)
        kinds = (AxisKind.REFLECT,)
    return Chart(spec=spec, coords=coords, spacings=spacings, axis_kinds=kinds)


# ---------------------------------------------------------------------------
# stencil machinery
#
# All differentiation goes through _pad, which extends an array by two ghost
# layers along one axis according to the axis topology, after which every
# stencil is plain slicing. Ghost construction is translation-equivariant on
# periodic axes, which makes cyclic index shifts commute bit-exactly with
# every derivative.
# ---------------------------------------------------------------------------

_PAD = 2  # ghost layers per side; enough for the widest (order-4) stencils


def _pad(values: np.ndarray, axis: int, chart: Chart, parity: float | np.ndarray):
    """Extend values by _PAD ghost layers on both sides of one grid axis.

    parity is +1/-1 (scalar or per trailing component) and is consulted only
    on pole axes; reflect axes use even extension regardless.
    """
    kind = chart.axis_kinds[axis]
    v = values if axis == 0 else np.moveaxis(values, axis, 0)
    if kind is AxisKind.PERIODIC:
        ext = np.concatenate([v[-_PAD:], v, v[:_PAD]], axis=0)
    elif kind is AxisKind.POLE:
        # phi is the following grid axis; after moveaxis it sits at position 1
        K = chart.shape[1]
        top = np.roll(v[_PAD - 1 :: -1], K // 2, axis=1)
        bot = np.roll(v[: -_PAD - 1 : -1], K // 2, axis=1)
        ext = np.concatenate([parity * top, v, parity * bot], axis=0)
    else:  # REFLECT: even extension about the staggered boundary
        ext = np.concatenate([v[_PAD - 1 :: -1], v, v[: -_PAD - 1 : -1]], axis=0)
    return ext if axis == 0 else np.moveaxis(ext, 0, axis)


def _slice_axis(ext: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """Undo padding with an index offset: offset 0 recovers the original."""
    n = ext.shape[axis] - 2 * _PAD
    if axis == 0:
        return ext[_PAD + offset : _PAD + offset + n]
    idx = [slice(None)] * ext.ndim
    idx[axis] = slice(_PAD + offset, _PAD + offset + n)
    return ext[tuple(idx)]


def diff1(values: np.ndarray, axis: int, chart: Chart, parity=1.0) -> np.ndarray:
    """First derivative along one grid axis (central, fd_order accurate)."""
    h = chart.spacings[axis]
    ext = _pad(values, axis, chart, parity)
    s = lambda k: _slice_axis(ext, axis, k)
    if chart.fd_order == 2:
        return (s(1) - s(-1)) / (2.0 * h)
    return (-s(2) + 8.0 * s(1) - 8.0 * s(-1) + s(-2)) / (12.0 * h)


def diff2(values: np.ndarray, axis: int, chart: Chart, parity=1.0) -> np.ndarray:
    """Second derivative along one grid axis (compact central stencil)."""
    h = chart.spacings[axis]
    ext = _pad(values, axis, chart, parity)
    s = lambda k: _slice_axis(ext, axis, k)
    if chart.fd_order == 2:
        return (s(1) - 2.0 * s(0) + s(-1)) / (h * h)
    return (-s(2) + 16.0 * s(1) - 30.0 * s(0) + 16.0 * s(-1) - s(-2)) / (12.0 * h * h)


def diff_mixed(values, axis_a: int, axis_b: int, chart: Chart, parity=1.0) -> np.ndarray:
    """Mixed second derivative, symmetric in the two axes by construction.

    Both orders of sequential first-derivative stencils are averaged; floating
    point addition is commutative, so swapping the axes is bit-exact.

    A first theta-derivative flips pole parity; derivatives along other axes
    leave it unchanged.
    """
    if axis_a == axis_b:
        raise UsageError("diff_mixed requires two distinct axes")
    pa_after_b = parity  # parity seen by the outer derivative along axis_a
    pb_after_a = parity
    if chart.axis_kinds[axis_b] is AxisKind.POLE:
        pa_after_b = -1.0 * np.asarray(parity)
    if chart.axis_kinds[axis_a] is AxisKind.POLE:
        pb_after_a = -1.0 * np.asarray(parity)
    u = diff1(diff1(values, axis_b, chart, parity), axis_a, chart, pa_after_b)
    v = diff1(diff1(values, axis_a, chart, parity), axis_b, chart, pb_after_a)
    return 0.5 * (u + v)


def partials(field: GridField, parity=None) -> tuple[GridField, GridField]:
    """First and second partial derivatives of every component.

    Returns (d1, d2) with d1.values of shape chart.shape + (m, c) and
    d2.values of shape chart.shape + (m, m, c); d2 is symmetric in its two
    axis indices bit-exactly. parity is an optional per-component +-1 vector
    for fields whose components are tensor components on a sphere chart.
    """
    chart = field.chart
    v = field.values
    c = field.components
    if parity is None:
        parity = 1.0
    m = chart.m
    d1 = np.empty(chart.shape + (m, c))
    d2 = np.empty(chart.shape + (m, m, c))
    for a in range(m):
        d1[..., a, :] = diff1(v, a, chart, parity)
        d2[..., a, a, :] = diff2(v, a, chart, parity)
        for b in range(a + 1, m):
            mixed = diff_mixed(v, a, b, chart, parity)
            d2[..., a, b, :] = mixed
            d2[..., b, a, :] = mixed
    if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
        raise NonFiniteError("non-finite values in partial derivatives")
    return GridField(chart, d1.reshape(chart.shape + (m * c,))), GridField(
        chart, d2.reshape(chart.shape + (m * m * c,))
    )


def integrate(scalar: GridField, density: GridField) -> float:
    """Quadrature sum(scalar * density * cell) over all nodes.

    density is the metric volume density (sqrt det g); the coordinate cell
    measure (product of spacings) is supplied by the chart. The reduction
    is the fixed C-order numpy sum for reproducibility.
    """
    if not scalar.chart.same_as(density.chart):
        raise UsageError("integrate: scalar and density live on different charts")
    if scalar.components != 1 or density.components != 1:
        raise UsageError("integrate expects single-component fields")
    dv = density.values
    if np.any(dv < 0):
        raise UsageError("integrate: density must be nonnegative")
    cell = scalar.chart.cell_measure()
    return float(np.sum(scalar.values[..., 0] * dv[..., 0]) * cell)


def integrate_values(values: np.ndarray, density: np.ndarray, chart: Chart) -> float:
    """Array-level variant of integrate for internal use."""
    return float(np.sum(values * density) * chart.cell_measure())


def roll_field(values: np.ndarray, axis: int, shift: int) -> np.ndarray:
    """Cyclic node shift along a periodic axis (test helper)."""
    return np.roll(values, shift, axis=axis)


# stencil coefficient tables: D1 and D2 entries as (offset, coefficient),
# to be divided by h resp. h^2
D1_COEFFS = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)),
}
D2_COEFFS = {
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    4: ((-2, -1.0 / 12.0), (-1, 16.0 / 12.0), (0, -30.0 / 12.0),
        (1, 16.0 / 12.0), (2, -1.0 / 12.0)),
}


def neighbor_maps(chart: Chart, axis: int, max_offset: int = _PAD) -> dict[int, np.ndarray]:
    """Flat node-index maps node -> stencil neighbor along one axis.

    Valid for scalar (even pole parity) fields; matches the ghost rules used
    by the stencil routines, so matrices assembled from these maps act
    identically to the matrix-free operators. Cached per chart spec.
    """
    return _neighbor_maps_cached(chart.spec, axis, max_offset)


from functools import lru_cache  # noqa: E402  (kept near its single use)


@lru_cache(maxsize=64)
def _neighbor_maps_cached(spec: ChartSpec, axis: int, max_offset: int) -> dict[int, np.ndarray]:
    chart = make_chart(spec)
    shape = chart.shape
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    kind = chart.axis_kinds[axis]
    maps: dict[int, np.ndarray] = {}
    for o in range(-max_offset, max_offset + 1):
        if o == 0:
            maps[0] = idx.ravel()
        elif kind is AxisKind.PERIODIC:
            maps[o] = np.roll(idx, -o, axis=axis).ravel()
        elif kind is AxisKind.POLE:
            J, K = shape
            jj = np.broadcast_to((np.arange(J) + o)[:, None], (J, K)).copy()
            kk = np.broadcast_to(np.arange(K), (J, K)).copy()
            out = (jj < 0) | (jj >= J)
            kk[out] = (kk[out] + K // 2) % K
            jj = np.where(jj < 0, -1 - jj, jj)
            jj = np.where(jj >= J, 2 * J - 1 - jj, jj)
            maps[o] = idx[jj, kk].ravel()
        else:  # REFLECT (1-axis charts)
            n = shape[axis]
            jj = np.arange(n) + o
            jj = np.where(jj < 0, -1 - jj, jj)
            jj = np.where(jj >= n, 2 * n - 1 - jj, jj)
            maps[o] = idx.ravel()[jj]
    return maps
