"""Core value types shared by the model, the reference executor and the simulator.

Conventions used throughout the package:

- Meshes are rectangular, 2D (m x n) or 3D (m x n x l), with m the
  fastest-varying (streaming) dimension.  Field storage is row-major with
  m fastest and the per-point components (arity) innermost.
- A stencil kernel is a list of taps.  Each tap pairs an offset vector,
  in cells, with either a real coefficient or the name of a pointwise
  coefficient field sampled at the centre point.
- The declared order of a kernel is twice the largest offset component
  magnitude.  Buffers and halos are sized from the declared order, so
  tap declaration order and offsets are part of the numeric contract:
  executors accumulate taps strictly in declaration order in single
  precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Tap",
    "StencilKernel",
    "MeshGeometry",
    "FieldData",
    "ResourceProfile",
    "DesignPoint",
    "Replace",
    "CarryStep",
    "CarryCombine",
    "Stage",
    "PipelineSpec",
    "FeasibilityReport",
    "validate_design",
    "estimate_dsp_cost",
    "pow2_floor",
    "U280",
]


def pow2_floor(x: int) -> int:
    """Largest power of two <= x, or 0 when x < 1."""
    if x < 1:
        return 0
    return 1 << (int(x).bit_length() - 1)


@dataclass(frozen=True)
class Tap:
    """One stencil tap: an offset vector and its coefficient.

    ``coeff`` is either a real number or the name of a pointwise
    coefficient field; a named coefficient is read at the centre point of
    the update, not at the offset position.
    """

    offset: tuple[int, ...]
    coeff: Union[float, str]

    def __post_init__(self):
        if len(self.offset) not in (2, 3):
            raise ValueError(f"tap offset must be 2D or 3D, got {self.offset}")
        if not all(isinstance(o, int) for o in self.offset):
            raise ValueError(f"tap offset components must be integers: {self.offset}")
        if isinstance(self.coeff, str):
            if not self.coeff:
                raise ValueError("named coefficient must be a non-empty field name")
        elif not math.isfinite(self.coeff):
            raise ValueError(f"tap coefficient must be finite, got {self.coeff}")


@dataclass(frozen=True)
class StencilKernel:
    """A single stencil update rule.

    ``dsp_cost`` is the DSP block count consumed by one mesh-point update
    at the target precision.  It is an opaque per-kernel input (taken from
    synthesis reports in practice); :func:`estimate_dsp_cost` gives a rough
    a-priori estimate when no report exists.

    ``scale_terms`` optionally multiplies the tap sum by a pointwise factor
    ``sum(w * field[centre])`` and ``post_scale`` by a final constant, in
    that order.  All arithmetic is single precision in declaration order.
    """

    name: str
    taps: tuple[Tap, ...]
    dsp_cost: int
    arity: int = 1
    scale_terms: tuple[tuple[str, float], ...] = ()
    post_scale: float | None = None

    def __post_init__(self):
        if not self.taps:
            raise ValueError(f"kernel {self.name!r} has no taps")
        ndims = {len(t.offset) for t in self.taps}
        if len(ndims) != 1:
            raise ValueError(f"kernel {self.name!r} mixes offset dimensionalities")
        if self.arity < 1:
            raise ValueError(f"kernel {self.name!r}: arity must be >= 1")
        if self.dsp_cost < 1:
            raise ValueError(f"kernel {self.name!r}: dsp_cost must be >= 1")
        for name, w in self.scale_terms:
            if not name:
                raise ValueError("scale term needs a field name")
            if not math.isfinite(w):
                raise ValueError(f"scale weight must be finite, got {w}")
        if self.post_scale is not None and not math.isfinite(self.post_scale):
            raise ValueError("post_scale must be finite")

    @property
    def ndim(self) -> int:
        return len(self.taps[0].offset)

    @property
    def order(self) -> int:
        """Declared stencil order: twice the largest offset magnitude."""
        return 2 * max((max(abs(c) for c in t.offset) for t in self.taps), default=0)

    @property
    def radius(self) -> int:
        return self.order // 2

    @property
    def pointwise_fields(self) -> tuple[str, ...]:
        """Names of coefficient fields this kernel reads, in first-use order."""
        names: list[str] = []
        for t in self.taps:
            if isinstance(t.coeff, str) and t.coeff not in names:
                names.append(t.coeff)
        for name, _ in self.scale_terms:
            if name not in names:
                names.append(name)
        return tuple(names)


def estimate_dsp_cost(kernel: StencilKernel) -> int:
    """Rough DSP estimate for one mesh-point update: 2 blocks per
    single-precision multiply and 2 per add.  A placed-and-routed report
    should override this; it ignores strength reduction and tap fusion."""
    mults = len(kernel.taps) + len(kernel.scale_terms)
    adds = len(kernel.taps) - 1 + max(0, len(kernel.scale_terms) - 1)
    if kernel.scale_terms:
        mults += 1  # apply the pointwise factor
    if kernel.post_scale is not None:
        mults += 1
    return 2 * mults + 2 * adds


@dataclass(frozen=True)
class MeshGeometry:
    """Rectangular mesh extents plus element layout.

    ``dims`` is (m, n) or (m, n, l) with m the streaming dimension.
    ``element_bytes`` is the byte width of one scalar component (4 for
    single precision) and ``arity`` the number of components per point.
    """

    dims: tuple[int, ...]
    element_bytes: int = 4
    arity: int = 1

    def __post_init__(self):
        if len(self.dims) not in (2, 3):
            raise ValueError(f"mesh must be 2D or 3D, got dims={self.dims}")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"mesh dims must be positive: {self.dims}")
        if self.element_bytes < 1:
            raise ValueError("element_bytes must be >= 1")
        if self.arity < 1:
            raise ValueError("arity must be >= 1")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def m(self) -> int:
        return self.dims[0]

    @property
    def n(self) -> int:
        return self.dims[1]

    @property
    def l(self) -> int:
        if self.ndim != 3:
            raise ValueError("l is only defined for 3D meshes")
        return self.dims[2]

    @property
    def cells(self) -> int:
        return math.prod(self.dims)

    @property
    def point_bytes(self) -> int:
        """Logical bytes moved per mesh point (all components)."""
        return self.arity * self.element_bytes

    @property
    def grid_shape(self) -> tuple[int, ...]:
        """numpy shape of the shaped view: dims reversed, arity innermost."""
        return tuple(reversed(self.dims)) + (self.arity,)


class FieldData:
    """A mesh-shaped field of finite single-precision values.

    Values are held flat, row-major with m fastest and arity innermost;
    ``grid()`` returns a read-only shaped view (n, m, a) or (l, n, m, a).
    """

    __slots__ = ("geometry", "values")

    def __init__(self, geometry: MeshGeometry, values: np.ndarray):
        values = np.asarray(values)
        if values.dtype != np.float32:
            raise ValueError(f"field values must be float32, got {values.dtype}")
        expected = geometry.cells * geometry.arity
        if values.size != expected:
            raise ValueError(
                f"field has {values.size} values, geometry needs {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        # Private copy so freezing the flags never touches caller arrays.
        flat = values.reshape(-1).copy()
        flat.flags.writeable = False
        self.geometry = geometry
        self.values = flat

    @classmethod
    def from_grid(cls, geometry: MeshGeometry, grid: np.ndarray) -> "FieldData":
        """Build from a shaped array; a missing arity axis is accepted."""
        grid = np.asarray(grid, dtype=np.float32)
        if grid.shape == tuple(reversed(geometry.dims)) and geometry.arity == 1:
            grid = grid[..., np.newaxis]
        if grid.shape != geometry.grid_shape:
            raise ValueError(
                f"grid shape {grid.shape} does not match {geometry.grid_shape}"
            )
        return cls(geometry, grid.reshape(-1))

    @classmethod
    def full(cls, geometry: MeshGeometry, value: float) -> "FieldData":
        flat = np.full(geometry.cells * geometry.arity, value, dtype=np.float32)
        return cls(geometry, flat)

    def grid(self) -> np.ndarray:
        view = self.values.reshape(self.geometry.grid_shape)
        view.flags.writeable = False
        return view

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldData):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(
            self.values, other.values
        )

    def __repr__(self) -> str:
        return f"FieldData(dims={self.geometry.dims}, arity={self.geometry.arity})"


@dataclass(frozen=True)
class ResourceProfile:
    """Device budget a design is checked against.

    ``channel_bw_bytes_per_s`` is the sustained bandwidth of one external
    memory channel and ``num_ports`` the number of channels a single
    accelerator instance may drive.  Utilisation caps scale the raw DSP
    and on-chip memory budgets before any bound is computed.
    """

    name: str
    dsp_total: int
    onchip_mem_bytes: int
    channel_bw_bytes_per_s: float
    num_ports: int = 1
    freq_hz: float = 300e6
    dsp_util_cap: float = 0.9
    mem_util_cap: float = 0.85

    def __post_init__(self):
        if self.dsp_total < 0 or self.onchip_mem_bytes < 0:
            raise ValueError("resource totals must be non-negative")
        if self.channel_bw_bytes_per_s <= 0:
            raise ValueError("channel bandwidth must be positive")
        if self.num_ports < 1:
            raise ValueError("num_ports must be >= 1")
        if self.freq_hz <= 0:
            raise ValueError("freq_hz must be positive")
        for cap in (self.dsp_util_cap, self.mem_util_cap):
            if not 0 < cap <= 1:
                raise ValueError(f"utilisation cap must be in (0, 1], got {cap}")

    @property
    def dsp_budget(self) -> int:
        return round(self.dsp_util_cap * self.dsp_total)

    @property
    def mem_budget_bytes(self) -> int:
        return round(self.mem_util_cap * self.onchip_mem_bytes)


# Alveo U280: 8490 DSP slices, 34.5 MB of URAM for line buffers, DDR4 at
# 19.2 GB/s per bank with two banks usable by one instance.
U280 = ResourceProfile(
    name="u280-ddr4",
    dsp_total=8490,
    onchip_mem_bytes=34_500_000,
    channel_bw_bytes_per_s=19.2e9,
    num_ports=2,
    freq_hz=300e6,
)


@dataclass(frozen=True)
class DesignPoint:
    """One candidate accelerator configuration.

    ``V`` is the vectorisation factor (cells updated per cycle per stage),
    ``p`` the iteration unroll depth (chained stage groups).  ``tile`` is
    None for full-mesh streaming, (M,) for 2D strip tiles or (M, N) for 3D
    column tiles.  ``batch`` stacks that many independent meshes into one
    stream.  ``freq_hz`` overrides the profile clock when set.
    """

    V: int
    p: int
    tile: tuple[int, ...] | None = None
    batch: int = 1
    freq_hz: float | None = None

    def __post_init__(self):
        if self.V < 1:
            raise ValueError(f"V must be >= 1, got {self.V}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.tile is not None:
            if len(self.tile) not in (1, 2):
                raise ValueError(f"tile must be (M,) or (M, N), got {self.tile}")
            if any(t < 1 for t in self.tile):
                raise ValueError(f"tile extents must be positive: {self.tile}")
        if self.freq_hz is not None and self.freq_hz <= 0:
            raise ValueError("freq_hz must be positive")

    def clock(self, profile: ResourceProfile) -> float:
        return self.freq_hz if self.freq_hz is not None else profile.freq_hz


# ---------------------------------------------------------------------------
# Multi-stage pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Replace:
    """Stage rule: the stencil result becomes the new value of ``out``.
    Double buffered; boundary points keep their previous value."""

    out: str


@dataclass(frozen=True)
class CarryStep:
    """Stage rule for staged time integrators.

    The stencil result K is stored under ``carry`` and a trial state
    ``out = base + K / divisor`` is emitted.  Boundary points copy
    ``base`` and carry K = 0.
    """

    out: str
    base: str
    carry: str
    divisor: float

    def __post_init__(self):
        if self.divisor == 0 or not math.isfinite(self.divisor):
            raise ValueError("divisor must be finite and non-zero")


@dataclass(frozen=True)
class CarryCombine:
    """Final combining rule: ``out = base + sum(term / divisor)``.

    ``terms`` pairs carried-slot names with divisors, applied in order;
    a None name stands for this stage's own stencil result.  All carried
    slots are dropped afterwards, so a chained copy of the pipeline sees
    only ``out`` and the pointwise fields.
    """

    out: str
    base: str
    terms: tuple[tuple[str | None, float], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("combine rule needs at least one term")
        for name, div in self.terms:
            if div == 0 or not math.isfinite(div):
                raise ValueError("divisor must be finite and non-zero")
        if sum(1 for name, _ in self.terms if name is None) != 1:
            raise ValueError("combine rule needs exactly one own-result term")


UpdateRule = Union[Replace, CarryStep, CarryCombine]


@dataclass(frozen=True)
class Stage:
    """One pipeline stage: a kernel applied to a named field plus the rule
    that folds the result into the stream state."""

    kernel: StencilKernel
    input: str
    rule: UpdateRule


@dataclass(frozen=True)
class PipelineSpec:
    """A fused chain of stencil stages executed once per iteration.

    ``field`` names the primary state the pipeline advances.  ``dsp_cost``
    is the DSP count of one whole-group mesh-point update; it defaults to
    the sum of the stage kernel costs but synthesis-reported group totals
    should be passed explicitly.

    ``min_plane_extent`` makes executors reject meshes whose x or y extent
    is below it; ``plane_cells_limit`` makes the simulator warn when the
    streamed cross-section exceeds it (on-chip plane budgets).
    """

    name: str
    field: str
    stages: tuple[Stage, ...]
    dsp_cost: int = 0
    min_plane_extent: int = 0
    plane_cells_limit: int | None = None

    def __post_init__(self):
        if not self.stages:
            raise ValueError(f"pipeline {self.name!r} has no stages")
        ndims = {s.kernel.ndim for s in self.stages}
        if len(ndims) != 1:
            raise ValueError(f"pipeline {self.name!r} mixes 2D and 3D kernels")
        arities = {s.kernel.arity for s in self.stages}
        if len(arities) != 1:
            raise ValueError(f"pipeline {self.name!r} mixes stage arities")
        last = self.stages[-1].rule
        if getattr(last, "out", None) != self.field:
            raise ValueError(
                f"pipeline {self.name!r}: last stage must write {self.field!r}"
            )
        if self.dsp_cost == 0:
            object.__setattr__(
                self, "dsp_cost", sum(s.kernel.dsp_cost for s in self.stages)
            )
        if self.dsp_cost < 1:
            raise ValueError("dsp_cost must be >= 1")

    @property
    def ndim(self) -> int:
        return self.stages[0].kernel.ndim

    @property
    def arity(self) -> int:
        return self.stages[0].kernel.arity

    @property
    def order(self) -> int:
        """Group order: halo consumed by one full chain traversal."""
        return sum(s.kernel.order for s in self.stages)

    @property
    def pointwise_fields(self) -> tuple[str, ...]:
        names: list[str] = []
        for s in self.stages:
            for f in s.kernel.pointwise_fields:
                if f not in names:
                    names.append(f)
        return tuple(names)


def single_stage(kernel: StencilKernel, field_name: str = "u") -> PipelineSpec:
    """Wrap a kernel as a one-stage in-place update pipeline."""
    return PipelineSpec(
        name=kernel.name,
        field=field_name,
        stages=(Stage(kernel=kernel, input=field_name, rule=Replace(out=field_name)),),
        dsp_cost=kernel.dsp_cost,
    )


Work = Union[StencilKernel, PipelineSpec]


def as_pipeline(work: Work) -> PipelineSpec:
    if isinstance(work, PipelineSpec):
        return work
    return single_stage(work)


FieldSet = Union[FieldData, Mapping[str, FieldData]]


def check_field_set(pipe: PipelineSpec, fields: FieldSet) -> dict[str, FieldData]:
    """Validate an executor's input fields against a pipeline.

    Accepts a bare FieldData for the primary field or a mapping holding
    the primary plus every pointwise coefficient field.  Returns a plain
    dict; raises ValueError on any mismatch.
    """
    if isinstance(fields, FieldData):
        fields = {pipe.field: fields}
    fields = dict(fields)
    if pipe.field not in fields:
        raise ValueError(f"missing primary field {pipe.field!r}")
    geo = fields[pipe.field].geometry
    if geo.arity != pipe.arity:
        raise ValueError(f"primary arity {geo.arity} != pipeline arity {pipe.arity}")
    if len(geo.dims) != pipe.ndim:
        raise ValueError(f"mesh is {len(geo.dims)}D but pipeline is {pipe.ndim}D")
    for name in pipe.pointwise_fields:
        if name not in fields:
            raise ValueError(f"missing pointwise field {name!r}")
        pg = fields[name].geometry
        if pg.dims != geo.dims:
            raise ValueError(f"field {name!r} dims {pg.dims} != mesh dims {geo.dims}")
        if pg.arity != 1:
            raise ValueError(f"pointwise field {name!r} must have arity 1")
    extra = set(fields) - {pipe.field} - set(pipe.pointwise_fields)
    if extra:
        raise ValueError(f"unexpected fields: {sorted(extra)}")
    if pipe.min_plane_extent:
        for extent, axis in zip(geo.dims[:2], "xy"):
            if extent < pipe.min_plane_extent:
                raise ValueError(
                    f"mesh {axis}-extent {extent} is below the pipeline minimum "
                    f"{pipe.min_plane_extent}"
                )
    return fields


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking a design point against a device profile.

    ``violations`` holds one line per failed bound, naming the bound and
    the computed limit; ``ok`` is True iff it is empty.
    """

    ok: bool
    violations: tuple[str, ...]
    v_limit: int
    p_dsp: int
    p_mem: int


def validate_design(
    d: DesignPoint,
    r: ResourceProfile,
    work: Work,
    g: MeshGeometry,
) -> FeasibilityReport:
    """Check V against the channel bound, p against the DSP and buffer
    bounds, and tile extents against the halo.  Infeasibility is reported,
    never raised; only inconsistent inputs raise ValueError."""
    from . import model  # local import; model depends on core types

    pipe = as_pipeline(work)
    if pipe.ndim != g.ndim:
        raise ValueError(f"kernel is {pipe.ndim}D but mesh is {g.ndim}D")
    if pipe.arity != g.arity:
        raise ValueError(f"kernel arity {pipe.arity} != mesh arity {g.arity}")

    D = pipe.order
    if D < 2:
        raise ValueError("feasibility bounds need a stencil order of at least 2")
    f = d.clock(r)
    violations: list[str] = []

    v_channel = model.max_vector_factor(r.channel_bw_bytes_per_s, f, g.point_bytes)
    v_limit = v_channel * r.num_ports
    if d.V > v_limit:
        violations.append(
            f"V={d.V} exceeds bandwidth bound {v_limit} "
            f"({v_channel} per channel x {r.num_ports} ports)"
        )

    p_dsp = model.unroll_limit_dsp(r.dsp_total, r.dsp_util_cap, d.V, pipe.dsp_cost)
    if d.p > p_dsp:
        violations.append(f"p={d.p} exceeds DSP bound {p_dsp}")

    # Buffered line extent: the tile cross-section when tiled, else the mesh.
    if d.tile is not None:
        extent = math.prod(d.tile)
    elif g.ndim == 2:
        extent = g.m
    else:
        extent = g.m * g.n
    p_mem = model.unroll_limit_mem(
        r.onchip_mem_bytes, r.mem_util_cap, g.point_bytes, D, extent
    )
    if d.p > p_mem:
        violations.append(f"p={d.p} exceeds buffer capacity bound {p_mem}")

    if d.tile is not None:
        want = g.ndim - 1
        if len(d.tile) != want:
            violations.append(
                f"tile rank {len(d.tile)} does not match {g.ndim}D mesh"
            )
        else:
            halo = d.p * D
            for extent_t, mesh_d, axis in zip(d.tile, g.dims, "xy"):
                if extent_t <= halo:
                    violations.append(
                        f"tile {axis}-extent {extent_t} does not clear halo {halo}"
                    )
                if extent_t > mesh_d:
                    violations.append(
                        f"tile {axis}-extent {extent_t} exceeds mesh extent {mesh_d}"
                    )

    return FeasibilityReport(
        ok=not violations,
        violations=tuple(violations),
        v_limit=v_limit,
        p_dsp=p_dsp,
        p_mem=p_mem,
    )
