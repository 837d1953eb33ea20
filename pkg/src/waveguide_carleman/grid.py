"""Space-time discretization of a planar waveguide.

The computational domain is the box (0, T) x (-L, L) x (0, h): a finite
axial interval crossed with a one-dimensional cross-section.  Everything
else in the package (heat solves, weight systems, inequality checks) is
built on the uniform vertex-centered tensor grid defined here, together
with second-order finite-difference calculus and trapezoidal quadrature.

Conventions:

* Nodes sit on the boundary (vertex-centered), so boundary traces and
  outward normal derivatives are read off directly without interpolation.
* ``n1``/``n2`` count *interior* nodes, so the axial spacing is
  ``2L / (n1 + 1)`` and a full axial line has ``n1 + 2`` nodes.
* The anchor abscissa ``alpha`` is snapped to the nearest axial node so
  that prefix integrals anchored there are exact node-column sums.
* Field arrays are indexed ``(time, x1, x2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Field kinds.
FULL = "full-field"
SPATIAL_SLICE = "spatial-slice"
BOUNDARY_TRACE = "boundary-trace"
SECTION_TRACE = "cross-section-trace"
_KINDS = (FULL, SPATIAL_SLICE, BOUNDARY_TRACE, SECTION_TRACE)

# Boundary segments.  x2_min/x2_max are the lateral walls, x1_min/x1_max
# the end caps.
SEGMENTS = ("x1_min", "x1_max", "x2_min", "x2_max")
LATERAL_SEGMENTS = ("x2_min", "x2_max")
CAP_SEGMENTS = ("x1_min", "x1_max")


@dataclass(frozen=True)
class WaveguideDomain:
    """Geometry of the waveguide and its observation set-up.

    ``L`` is the axial half-length (the truncation radius when
    ``truncated`` is set), ``h`` the cross-section height, ``T`` the final
    time and ``alpha`` the interior anchor abscissa used by the
    prefix-integral identities.  Exactly one lateral wall, selected by
    ``obs_side``, carries the observation boundary.
    """

    L: float
    h: float
    T: float
    alpha: float = 0.0
    obs_side: str = "top"
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.L <= 0 or self.h <= 0 or self.T <= 0:
            raise ValueError(
                f"domain dimensions must be positive, got L={self.L}, h={self.h}, T={self.T}"
            )
        if not (-self.L < self.alpha < self.L):
            raise ValueError(f"alpha={self.alpha} must lie strictly inside (-L, L)")
        if self.obs_side not in ("top", "bottom"):
            raise ValueError(f"obs_side must be 'top' or 'bottom', got {self.obs_side!r}")

    @property
    def obs_segment(self) -> str:
        """Boundary tag of the observed lateral wall."""
        return "x2_max" if self.obs_side == "top" else "x2_min"

    @property
    def hidden_segment(self) -> str:
        """Boundary tag of the unobserved lateral wall."""
        return "x2_min" if self.obs_side == "top" else "x2_max"


class SpaceTimeGrid:
    """Uniform tensor-product grid on (0, T) x (-L, L) x (0, h).

    Immutable after construction; all derivative and quadrature routines
    below are pure functions of their inputs, so grids and fields may be
    shared freely across threads.
    """

    def __init__(self, domain: WaveguideDomain, n1: int, n2: int, nt: int):
        for name, value in (("n1", n1), ("n2", n2), ("nt", nt)):
            if int(value) != value or value < 4:
                raise ValueError(f"{name} must be an integer >= 4, got {value}")
        self.domain = domain
        self.n1 = int(n1)
        self.n2 = int(n2)
        self.nt = int(nt)

        self.x1 = np.linspace(-domain.L, domain.L, self.n1 + 2)
        self.x2 = np.linspace(0.0, domain.h, self.n2 + 2)
        self.t = np.linspace(0.0, domain.T, self.nt + 1)
        self.dx1 = 2.0 * domain.L / (self.n1 + 1)
        self.dx2 = domain.h / (self.n2 + 1)
        self.dt = domain.T / self.nt

        # Snap the anchor to the nearest axial node.
        self.alpha_index = int(np.argmin(np.abs(self.x1 - domain.alpha)))
        self.alpha_snapped = float(self.x1[self.alpha_index])
        self.alpha_snap_distance = abs(self.alpha_snapped - domain.alpha)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nt + 1, self.n1 + 2, self.n2 + 2)

    @property
    def dirichlet_segments(self) -> tuple[str, ...]:
        return SEGMENTS if self.domain.truncated else LATERAL_SEGMENTS

    @property
    def neumann_segments(self) -> tuple[str, ...]:
        return () if self.domain.truncated else CAP_SEGMENTS

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable (t, x1, x2) coordinate arrays for a full field."""
        return (
            self.t[:, None, None],
            self.x1[None, :, None],
            self.x2[None, None, :],
        )

    def sample(self, fn) -> "ScalarField":
        """Sample ``fn(t, x1, x2)`` on the full space-time grid."""
        tt, xx1, xx2 = self.mesh()
        values = np.broadcast_to(fn(tt, xx1, xx2), self.shape).astype(float).copy()
        return ScalarField(self, values, FULL)

    def sample_spatial(self, fn) -> "ScalarField":
        """Sample ``fn(x1, x2)`` on the spatial grid."""
        values = np.broadcast_to(
            fn(self.x1[:, None], self.x2[None, :]), (self.n1 + 2, self.n2 + 2)
        ).astype(float).copy()
        return ScalarField(self, values, SPATIAL_SLICE)

    def sample_section(self, fn) -> "ScalarField":
        """Sample ``fn(t, x2)`` over time and the cross-section."""
        values = np.broadcast_to(
            fn(self.t[:, None], self.x2[None, :]), (self.nt + 1, self.n2 + 2)
        ).astype(float).copy()
        return ScalarField(self, values, SECTION_TRACE)

    def trapezoid_weights(self, axis: str) -> np.ndarray:
        """One-dimensional trapezoid weights along ``'t'``, ``'x1'`` or ``'x2'``."""
        n, d = {
            "t": (self.nt + 1, self.dt),
            "x1": (self.n1 + 2, self.dx1),
            "x2": (self.n2 + 2, self.dx2),
        }[axis]
        w = np.full(n, d)
        w[0] = w[-1] = 0.5 * d
        return w

    def __repr__(self) -> str:  # pragma: no cover
        d = self.domain
        return (
            f"SpaceTimeGrid(L={d.L}, h={d.h}, T={d.T}, n1={self.n1}, n2={self.n2}, "
            f"nt={self.nt}, alpha={self.alpha_snapped}, truncated={d.truncated})"
        )


def build_grid(domain: WaveguideDomain, n1: int, n2: int, nt: int) -> SpaceTimeGrid:
    """Build a grid; rejects counts below 4 and validates the snap distance."""
    grid = SpaceTimeGrid(domain, n1, n2, nt)
    if grid.alpha_snap_distance > 0.5 * grid.dx1 + 1e-12:
        raise ValueError(
            f"alpha snap distance {grid.alpha_snap_distance} exceeds dx1/2={grid.dx1 / 2}"
        )
    return grid


class ScalarField:
    """A sampled real-valued function attached to a grid.

    ``kind`` selects the sampling set: the full space-time grid, a spatial
    slice, a boundary trace along one segment (with time), or a
    cross-section trace (time × x2).  Every constructed field is checked
    to be finite.
    """

    def __init__(self, grid: SpaceTimeGrid, values: np.ndarray, kind: str,
                 segment: str | None = None):
        if kind not in _KINDS:
            raise ValueError(f"unknown field kind {kind!r}")
        values = np.asarray(values, dtype=float)
        expected = _expected_shape(grid, kind, segment)
        if values.shape != expected:
            raise ValueError(
                f"value shape {values.shape} does not match {kind} shape {expected}"
            )
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite entry in {kind} field at index {tuple(bad)}")
        self.grid = grid
        self.values = values
        self.kind = kind
        self.segment = segment

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.kind, self.segment)

    def __repr__(self) -> str:  # pragma: no cover
        return f"ScalarField(kind={self.kind!r}, shape={self.values.shape})"


def _expected_shape(grid: SpaceTimeGrid, kind: str, segment: str | None):
    if kind == FULL:
        return grid.shape
    if kind == SPATIAL_SLICE:
        return (grid.n1 + 2, grid.n2 + 2)
    if kind == SECTION_TRACE:
        return (grid.nt + 1, grid.n2 + 2)
    if kind == BOUNDARY_TRACE:
        if segment not in SEGMENTS:
            raise ValueError(f"boundary trace needs a segment from {SEGMENTS}, got {segment!r}")
        if segment in LATERAL_SEGMENTS:
            return (grid.nt + 1, grid.n1 + 2)
        return (grid.nt + 1, grid.n2 + 2)
    raise ValueError(kind)


# ---------------------------------------------------------------------------
# Finite-difference calculus (second order, one-sided at boundaries)
# ---------------------------------------------------------------------------


def _second_derivative(values: np.ndarray, d: float, axis: int) -> np.ndarray:
    """Second derivative along ``axis``: 3-point centered stencil inside,
    4-point one-sided stencil (also second order) at the two ends."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / d**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / d**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / d**2
    return np.moveaxis(out, 0, axis)


def gradient(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Spatial gradient (d/dx1, d/dx2) of a full field."""
    _require_full(f, "gradient")
    g = f.grid
    d1 = np.gradient(f.values, g.dx1, axis=1, edge_order=2)
    d2 = np.gradient(f.values, g.dx2, axis=2, edge_order=2)
    return ScalarField(g, d1, FULL), ScalarField(g, d2, FULL)


def laplacian(f: ScalarField) -> ScalarField:
    """Five-point Laplacian of a full field."""
    _require_full(f, "laplacian")
    g = f.grid
    out = _second_derivative(f.values, g.dx1, 1) + _second_derivative(f.values, g.dx2, 2)
    return ScalarField(g, out, FULL)


def time_derivative(f: ScalarField) -> ScalarField:
    """d/dt of a full field (centered inside, one-sided at t=0 and t=T)."""
    _require_full(f, "time_derivative")
    g = f.grid
    out = np.gradient(f.values, g.dt, axis=0, edge_order=2)
    return ScalarField(g, out, FULL)


def normal_derivative(f: ScalarField, segment: str) -> ScalarField:
    """Outward normal derivative on one boundary segment.

    One-sided second-order stencil along the outward normal; the sign
    convention is outward, so e.g. on the bottom wall the normal is -e2.
    """
    _require_full(f, "normal_derivative")
    if segment not in SEGMENTS:
        raise ValueError(f"unknown boundary segment {segment!r}")
    g = f.grid
    v = f.values
    if segment == "x2_max":
        tr = (3.0 * v[:, :, -1] - 4.0 * v[:, :, -2] + v[:, :, -3]) / (2.0 * g.dx2)
    elif segment == "x2_min":
        tr = (3.0 * v[:, :, 0] - 4.0 * v[:, :, 1] + v[:, :, 2]) / (2.0 * g.dx2)
    elif segment == "x1_max":
        tr = (3.0 * v[:, -1, :] - 4.0 * v[:, -2, :] + v[:, -3, :]) / (2.0 * g.dx1)
    else:  # x1_min
        tr = (3.0 * v[:, 0, :] - 4.0 * v[:, 1, :] + v[:, 2, :]) / (2.0 * g.dx1)
    return ScalarField(g, tr, BOUNDARY_TRACE, segment)


def _require_full(f: ScalarField, op: str) -> None:
    if f.kind != FULL:
        raise ValueError(f"{op} expects a full field, got kind {f.kind!r}")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def integrate_values(grid: SpaceTimeGrid, values: np.ndarray, region: str,
                     segment: str | None = None) -> float:
    """Trapezoidal integral of raw values over a named region.

    Regions: ``Q`` (full space-time box), ``boundary`` (one boundary
    segment crossed with time), ``section_time`` ((0,T) x cross-section)
    and ``omega`` (the spatial box at one instant).
    """
    wt = grid.trapezoid_weights("t")
    w1 = grid.trapezoid_weights("x1")
    w2 = grid.trapezoid_weights("x2")
    if region == "Q":
        return float(np.einsum("tij,t,i,j->", values, wt, w1, w2))
    if region == "boundary":
        if segment in LATERAL_SEGMENTS:
            return float(np.einsum("ti,t,i->", values, wt, w1))
        if segment in CAP_SEGMENTS:
            return float(np.einsum("tj,t,j->", values, wt, w2))
        raise ValueError(f"boundary integral needs a segment, got {segment!r}")
    if region == "section_time":
        return float(np.einsum("tj,t,j->", values, wt, w2))
    if region == "omega":
        return float(np.einsum("ij,i,j->", values, w1, w2))
    raise ValueError(f"unknown region {region!r}")


def integrate(f: ScalarField, region: str | None = None) -> float:
    """Integrate a field over its natural region (or an explicit one)."""
    default = {
        FULL: "Q",
        SPATIAL_SLICE: "omega",
        BOUNDARY_TRACE: "boundary",
        SECTION_TRACE: "section_time",
    }[f.kind]
    region = region or default
    if region != default:
        raise ValueError(f"region {region!r} incompatible with field kind {f.kind!r}")
    return integrate_values(f.grid, f.values, region, f.segment)


def line_integral(values: np.ndarray, spacing: float) -> float:
    """Trapezoidal integral of uniformly sampled 1-D data."""
    values = np.asarray(values, dtype=float)
    return float(np.trapezoid(values, dx=spacing))


def prefix_integral_x1(f: ScalarField) -> ScalarField:
    """Signed trapezoidal prefix integral along x1, anchored at the
    alpha-column: out(t, x1, x2) = integral from alpha to x1 of f."""
    _require_full(f, "prefix_integral_x1")
    g = f.grid
    v = f.values
    inc = 0.5 * g.dx1 * (v[:, :-1, :] + v[:, 1:, :])
    cs = np.concatenate(
        [np.zeros((v.shape[0], 1, v.shape[2])), np.cumsum(inc, axis=1)], axis=1
    )
    out = cs - cs[:, g.alpha_index : g.alpha_index + 1, :]
    return ScalarField(g, out, FULL)


def fit_convergence_order(spacings, errors) -> float:
    """Least-squares slope of log(error) versus log(spacing)."""
    spacings = np.asarray(spacings, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("errors must be positive for an order fit")
    return float(np.polyfit(np.log(spacings), np.log(errors), 1)[0])


# ---------------------------------------------------------------------------
# Field persistence: one metadata document + one raw little-endian values file
# ---------------------------------------------------------------------------

_FORMAT = "waveguide-field-v1"
_CREATOR = "waveguide-carleman"


def save_field(f: ScalarField, basepath: str | Path) -> tuple[Path, Path]:
    """Write ``basepath.meta`` (text key:value) and ``basepath.f64``
    (little-endian float64, row-major in (time, x1, x2) order)."""
    base = Path(basepath)
    d = f.grid.domain
    lines = [
        f"format: {_FORMAT}",
        f"creator: {_CREATOR}",
        f"kind: {f.kind}",
        f"segment: {f.segment or '-'}",
        f"L: {d.L!r}",
        f"h: {d.h!r}",
        f"T: {d.T!r}",
        f"alpha: {d.alpha!r}",
        f"obs_side: {d.obs_side}",
        f"truncated: {int(d.truncated)}",
        f"n1: {f.grid.n1}",
        f"n2: {f.grid.n2}",
        f"nt: {f.grid.nt}",
        f"shape: {','.join(str(s) for s in f.values.shape)}",
    ]
    meta_path = base.with_suffix(base.suffix + ".meta")
    data_path = base.with_suffix(base.suffix + ".f64")
    meta_path.write_text("\n".join(lines) + "\n")
    data_path.write_bytes(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return meta_path, data_path


def load_field(basepath: str | Path) -> ScalarField:
    """Read back a field written by :func:`save_field`."""
    base = Path(basepath)
    meta_path = base.with_suffix(base.suffix + ".meta")
    data_path = base.with_suffix(base.suffix + ".f64")
    meta: dict[str, str] = {}
    for line in meta_path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    if meta.get("format") != _FORMAT:
        raise ValueError(f"unsupported field format {meta.get('format')!r}")
    domain = WaveguideDomain(
        L=float(meta["L"]),
        h=float(meta["h"]),
        T=float(meta["T"]),
        alpha=float(meta["alpha"]),
        obs_side=meta["obs_side"],
        truncated=bool(int(meta["truncated"])),
    )
    grid = build_grid(domain, int(meta["n1"]), int(meta["n2"]), int(meta["nt"]))
    shape = tuple(int(s) for s in meta["shape"].split(","))
    raw = np.frombuffer(data_path.read_bytes(), dtype="<f8").reshape(shape)
    segment = None if meta["segment"] == "-" else meta["segment"]
    return ScalarField(grid, raw.astype(float), meta["kind"], segment)
