"""Streaming dataflow simulator for chained stencil stages.

The machine being modeled: mesh data streams in V-wide words through p
copies of the stage group, connected head to tail.  Each stage owns a
window buffer holding the last D lines (rows in 2D, planes in 3D) of its
input stream and emits one output line per input line after a fill delay
of D/2 lines.  External memory is touched only at the chain ends.

Cycle accounting is slot counting: one V-wide word enters the chain head
per cycle, so a pass costs (lines + fill) * slots_per_line with the fill
summed over all stage radii.  That makes the counters exactly equal to
the closed-form model by construction, while outputs are produced by
genuinely streaming the data through per-stage windows.  Fixed arithmetic
pipeline depth is excluded from the counts and reported separately as a
rough constant estimate.

Numeric contract: taps accumulate in declaration order in single
precision, identical to the reference executor, so equality is bitwise.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CarryCombine,
    CarryStep,
    DesignPoint,
    FieldData,
    FieldSet,
    MeshGeometry,
    PipelineSpec,
    Replace,
    ResourceProfile,
    Stage,
    Work,
    as_pipeline,
    check_field_set,
)
from . import model

__all__ = [
    "CapacityError",
    "WindowBuffer",
    "SimPipeline",
    "SimResult",
    "BatchResult",
    "build_pipeline",
    "simulate",
    "simulate_tiled",
    "simulate_batched",
]

# Rough single-precision ALU latency in cycles, used only for the
# pipeline-depth estimate reported alongside (never inside) cycle counts.
_ALU_LATENCY = 8


class CapacityError(RuntimeError):
    """Raised when the unroll depth does not fit the line-buffer budget."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class WindowBuffer:
    """Line-reuse storage for one stage.

    Retains the last ``order`` lines of the input stream plus the incoming
    line, so every tap of an order-D stencil is served on chip.  ``lanes``
    is the vector width V; ``span_cells`` the per-lane shift-register span
    covering the in-line tap extent.
    """

    def __init__(self, order: int, line_cells: int, lanes: int, span_cells: int):
        if order < 0 or line_cells < 1 or lanes < 1 or span_cells < 1:
            raise ValueError("window buffer extents must be positive")
        self.order = order
        self.line_cells = line_cells
        self.lanes = lanes
        self.span_cells = span_cells
        self.accepted = 0
        self._lines: deque = deque(maxlen=order + 1)

    @property
    def capacity_cells(self) -> int:
        """Cells retained across lines: the largest distance, in cells,
        between any two taps of an order-spanning stencil."""
        return self.order * self.line_cells

    def push(self, item) -> None:
        self._lines.append(item)
        self.accepted += 1

    def line(self, offset: int):
        """Stored line at stream offset ``offset`` from the centre, where
        the centre lags the newest accepted line by order/2."""
        return self._lines[len(self._lines) - 1 - self.order // 2 + offset]


@dataclass(frozen=True)
class SimPipeline:
    """A design point bound to a pipeline: p chained copies of the stage
    group.  Immutable; per-run buffers are created inside the run calls,
    so independent runs of one SimPipeline never share state."""

    pipe: PipelineSpec
    design: DesignPoint
    profile: ResourceProfile | None = None

    @property
    def stages(self) -> tuple[Stage, ...]:
        return self.pipe.stages * self.design.p

    def window_buffers(self, g: MeshGeometry) -> tuple[WindowBuffer, ...]:
        """Structural descriptors of the per-stage windows for a mesh
        (the streamed cross-section: the tile's when the design tiles)."""
        if self.design.tile is not None:
            cross = self.design.tile
        else:
            cross = g.dims[:-1]
        line_cells = math.prod(cross)
        bufs = []
        for st in self.stages:
            xs = [t.offset[0] for t in st.kernel.taps]
            span = max(xs) - min(xs) + 1
            bufs.append(
                WindowBuffer(
                    order=st.kernel.order,
                    line_cells=line_cells,
                    lanes=self.design.V,
                    span_cells=span,
                )
            )
        return tuple(bufs)


@dataclass(frozen=True)
class SimResult:
    """Outcome of one simulated run on one mesh."""

    output: FieldData
    cycles: int
    bytes_read: int
    bytes_written: int
    n_iter: int
    n_iter_effective: int
    passes: int
    redundant_cells: int = 0
    tiles_per_pass: int = 1
    depth_cycles_estimate: int = 0


@dataclass(frozen=True)
class BatchResult:
    """Outcome of one batched run: per-mesh outputs, aggregate counters."""

    outputs: tuple[FieldData, ...]
    cycles: int
    cycles_per_mesh: float
    bytes_read: int
    bytes_written: int
    n_iter: int
    n_iter_effective: int
    passes: int
    depth_cycles_estimate: int = 0


def build_pipeline(
    work: Work, d: DesignPoint, profile: ResourceProfile | None = None
) -> SimPipeline:
    """Bind a pipeline to a design point.

    Feasibility against a profile is the caller's concern (what-if runs
    are allowed); only structural consistency is enforced here.
    """
    pipe = as_pipeline(work)
    if d.tile is not None and d.batch > 1:
        raise ValueError("tiled and batched execution cannot be combined")
    if d.tile is not None and len(d.tile) != pipe.ndim - 1:
        raise ValueError(
            f"tile rank {len(d.tile)} does not fit a {pipe.ndim}D pipeline"
        )
    return SimPipeline(pipe=pipe, design=d, profile=profile)


# ---------------------------------------------------------------------------
# Streaming engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Frame:
    """Placement of the streamed block within the global mesh.

    x (and y in 3D) are in-line axes; the stream axis is n (2D) or l (3D).
    x0/y0 may be negative for halo overhang; freeze masks are derived from
    the global extents so out-of-mesh and near-boundary cells pass through.
    """

    ndim: int
    stream_len: int
    segments: int
    x0: int
    m_loc: int
    m_glob: int
    y0: int = 0
    n_loc: int = 1
    n_glob: int = 1

    @property
    def total_lines(self) -> int:
        return self.stream_len * self.segments


def _axis_bounds(r: int, extent_local: int, o: int, extent_glob: int):
    """Computable cell range on one in-line axis: inside the local window
    and at least r from the global mesh boundary."""
    lo = max(r, r - o)
    hi = min(extent_local - r, extent_glob - r - o)
    return lo, hi


class _StageRun:
    """One stage instance during one pass: window, schedule, arithmetic."""

    def __init__(self, stage: Stage, frame: _Frame, lanes: int):
        k = stage.kernel
        self.kernel = k
        self.rule = stage.rule
        self.input = stage.input
        self.r = k.radius
        self.frame = frame
        line_cells = frame.m_loc * (frame.n_loc if frame.ndim == 3 else 1)
        xs = [t.offset[0] for t in k.taps]
        self.window = WindowBuffer(
            order=k.order,
            line_cells=line_cells,
            lanes=lanes,
            span_cells=max(xs) - min(xs) + 1,
        )
        self.next_emit = 0
        self.x_lo, self.x_hi = _axis_bounds(
            self.r, frame.m_loc, frame.x0, frame.m_glob
        )
        if frame.ndim == 3:
            self.y_lo, self.y_hi = _axis_bounds(
                self.r, frame.n_loc, frame.y0, frame.n_glob
            )
        else:
            self.y_lo, self.y_hi = 0, 1
        self.computable = self.x_hi > self.x_lo and self.y_hi > self.y_lo
        # coefficients fixed to single precision once, applied in tap order
        self.coeffs = [
            t.coeff if isinstance(t.coeff, str) else np.float32(t.coeff)
            for t in k.taps
        ]
        self.scale = [(name, np.float32(w)) for name, w in k.scale_terms]
        self.post = None if k.post_scale is None else np.float32(k.post_scale)
        self._zeros = None

    def push(self, index: int, item) -> list:
        self.window.push(item)
        out = []
        while self.next_emit + self.r <= index:
            t = self.next_emit
            self.next_emit += 1
            out.append((t, self._emit(t)))
        return out

    def _emit(self, t: int):
        f = self.frame
        if t >= f.total_lines:
            return self._zeros
        tt = t % f.stream_len
        centre = self.window.line(0)
        boundary = tt < self.r or tt >= f.stream_len - self.r
        result = None
        if not boundary and self.computable:
            result = self._stencil()
        out = self._apply_rule(centre, result)
        if self._zeros is None:
            self._zeros = {name: np.zeros_like(arr) for name, arr in out.items()}
        return out

    def _in_line(self, arr: np.ndarray, ox: int, oy: int) -> np.ndarray:
        if self.frame.ndim == 2:
            return arr[self.x_lo + ox : self.x_hi + ox]
        return arr[self.y_lo + oy : self.y_hi + oy, self.x_lo + ox : self.x_hi + ox]

    def _centre_box(self, arr: np.ndarray) -> np.ndarray:
        return self._in_line(arr, 0, 0)

    def _stencil(self) -> np.ndarray:
        centre = self.window.line(0)
        acc = None
        for tap, coeff in zip(self.kernel.taps, self.coeffs):
            off = tap.offset
            oz = off[2] if len(off) == 3 else off[1]
            oy = off[1] if len(off) == 3 else 0
            seg = self._in_line(self.window.line(oz)[self.input], off[0], oy)
            if isinstance(coeff, str):
                contrib = self._centre_box(centre[coeff])[..., np.newaxis] * seg
            else:
                contrib = coeff * seg
            acc = contrib if acc is None else acc + contrib
        if self.scale:
            factor = None
            for name, w in self.scale:
                term = w * self._centre_box(centre[name])
                factor = term if factor is None else factor + term
            acc = acc * factor[..., np.newaxis]
        if self.post is not None:
            acc = acc * self.post
        return acc

    def _apply_rule(self, centre, result):
        rule = self.rule
        if isinstance(rule, Replace):
            out = dict(centre)
            if result is not None:
                line = centre[rule.out].copy()
                self._centre_box(line)[...] = result
                out[rule.out] = line
            return out
        if isinstance(rule, CarryStep):
            out = dict(centre)
            base = centre[rule.base]
            carry = np.zeros_like(base)
            if result is None:
                out[rule.out] = base
            else:
                trial = base.copy()
                box = self._centre_box(trial)
                box[...] = self._centre_box(base) + result / np.float32(rule.divisor)
                self._centre_box(carry)[...] = result
                out[rule.out] = trial
            out[rule.carry] = carry
            return out
        if isinstance(rule, CarryCombine):
            base = centre[rule.base]
            if result is None:
                line = base
            else:
                line = base.copy()
                acc = self._centre_box(base)
                for name, div in rule.terms:
                    term = result if name is None else self._centre_box(centre[name])
                    acc = acc + term / np.float32(div)
                self._centre_box(line)[...] = acc
            out = {
                name: arr
                for name, arr in centre.items()
                if name == rule.out or name in self._passthrough_names(centre)
            }
            out[rule.out] = line
            return out
        raise TypeError(f"unknown update rule {type(rule).__name__}")

    def _passthrough_names(self, centre) -> set:
        # pointwise coefficient planes survive a combining stage; carried
        # slots and scratch fields are dropped at the group boundary
        rule = self.rule
        dropped = {rule.base, rule.out} | {n for n, _ in rule.terms if n is not None}
        dropped |= {self.input}
        return set(centre) - dropped


def _pass_once(
    chain: Sequence[Stage],
    frame: _Frame,
    field: str,
    pointwise: tuple[str, ...],
    state: dict[str, np.ndarray],
    V: int,
):
    """Stream every line of ``state`` through the chain once (p iterations).

    Returns (output grid, slots, lines_read).  Slots count V-wide words
    injected at the head, including fill; reads count real lines only.
    """
    runs = [_StageRun(st, frame, V) for st in chain]
    fill = sum(run.r for run in runs)
    total = frame.total_lines
    primary = state[field]
    out = np.empty_like(primary)
    if frame.ndim == 2:
        slots_per_line = _ceil_div(frame.m_loc, V)
    else:
        slots_per_line = _ceil_div(frame.m_loc, V) * frame.n_loc
    head_zero = None
    slots = 0
    last = len(runs) - 1
    for i in range(total + fill):
        slots += slots_per_line
        if i < total:
            item = {field: primary[i]}
            for name in pointwise:
                item[name] = state[name][i]
        else:
            if head_zero is None:
                head_zero = {field: np.zeros_like(primary[0])}
                for name in pointwise:
                    head_zero[name] = np.zeros_like(state[name][0])
            item = head_zero
        work = [(0, i, item)]
        while work:
            s, idx, it = work.pop()
            for t, emitted in runs[s].push(idx, it):
                if s < last:
                    work.append((s + 1, t, emitted))
                elif t < total:
                    out[t] = emitted[field]
    return out, slots, total


def _depth_estimate(chain: Sequence[Stage]) -> int:
    total = 0
    for st in chain:
        k = st.kernel
        total += _ALU_LATENCY * (1 + math.ceil(math.log2(max(2, len(k.taps)))))
        if k.scale_terms:
            total += _ALU_LATENCY
        if k.post_scale is not None:
            total += _ALU_LATENCY
    return total


def _check_capacity(sp: SimPipeline, g: MeshGeometry, cross_cells: int) -> None:
    if sp.profile is not None:
        D = sp.pipe.order
        if D >= 1:
            p_mem = model.unroll_limit_mem(
                sp.profile.onchip_mem_bytes,
                sp.profile.mem_util_cap,
                g.point_bytes,
                D,
                cross_cells,
            )
            if sp.design.p > p_mem:
                need = sp.design.p * D * cross_cells * g.point_bytes
                raise CapacityError(
                    f"unroll p={sp.design.p} needs {need} window-buffer bytes; "
                    f"the memory budget sustains p_mem={p_mem} for this "
                    f"cross-section"
                )
    if sp.pipe.plane_cells_limit and cross_cells > sp.pipe.plane_cells_limit:
        warnings.warn(
            f"streamed cross-section of {cross_cells} cells exceeds the "
            f"pipeline's on-chip plane budget {sp.pipe.plane_cells_limit}",
            RuntimeWarning,
            stacklevel=3,
        )


def _prepare(sp: SimPipeline, fields: FieldSet):
    pipe = sp.pipe
    fields = check_field_set(pipe, fields)
    geo = fields[pipe.field].geometry
    state: dict[str, np.ndarray] = {pipe.field: fields[pipe.field].grid().copy()}
    for name in pipe.pointwise_fields:
        state[name] = fields[name].grid()[..., 0].copy()
    return geo, state


def simulate(sp: SimPipeline, fields: FieldSet, n_iter: int) -> SimResult:
    """Stream the whole mesh through the chain; bitwise equal to the
    reference executor, cycle counts equal to the closed-form model."""
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    pipe, d = sp.pipe, sp.design
    geo, state = _prepare(sp, fields)
    cross = geo.m if geo.ndim == 2 else geo.m * geo.n
    _check_capacity(sp, geo, cross)

    n_eff = model.effective_iters(n_iter, d.p)
    passes = n_eff // d.p
    if geo.ndim == 2:
        frame = _Frame(ndim=2, stream_len=geo.n, segments=1, x0=0,
                       m_loc=geo.m, m_glob=geo.m)
    else:
        frame = _Frame(ndim=3, stream_len=geo.l, segments=1, x0=0,
                       m_loc=geo.m, m_glob=geo.m, y0=0, n_loc=geo.n,
                       n_glob=geo.n)
    chain = sp.stages
    pw = pipe.pointwise_fields
    line_read = _line_bytes(geo, frame, len(pw))
    cycles = 0
    bytes_read = 0
    bytes_written = 0
    for _ in range(passes):
        out, slots, lines = _pass_once(chain, frame, pipe.field, pw, state, d.V)
        state[pipe.field] = out
        cycles += slots
        bytes_read += lines * line_read
        bytes_written += geo.cells * geo.point_bytes
    output = FieldData.from_grid(geo, state[pipe.field])
    return SimResult(
        output=output,
        cycles=cycles,
        bytes_read=bytes_read,
        bytes_written=bytes_written,
        n_iter=n_iter,
        n_iter_effective=n_eff,
        passes=passes,
        depth_cycles_estimate=_depth_estimate(chain),
    )


def _line_bytes(geo: MeshGeometry, frame: _Frame, n_pointwise: int) -> int:
    """Logical bytes of one injected line: primary plus pointwise planes."""
    cells = frame.m_loc * (frame.n_loc if frame.ndim == 3 else 1)
    return cells * geo.point_bytes + n_pointwise * cells * geo.element_bytes


def simulate_tiled(
    sp: SimPipeline,
    fields: FieldSet,
    n_iter: int,
    tile: tuple[int, ...] | None = None,
) -> SimResult:
    """Run the mesh as overlapping blocks that fit on chip.

    Blocks of fixed cross-section are placed so their committed interiors
    partition the mesh; each block carries a p*D/2 halo overhang on every
    tiled side, reading clamped edge values where it leaves the mesh.
    Output is bitwise identical to the untiled run; the redundant-cell
    counter reports computed-minus-valid per block.
    """
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    pipe, d = sp.pipe, sp.design
    tile = tile if tile is not None else d.tile
    if tile is None:
        raise ValueError("no tile extents given")
    if len(tile) != pipe.ndim - 1:
        raise ValueError(f"tile rank {len(tile)} does not fit a {pipe.ndim}D mesh")
    geo, state = _prepare(sp, fields)
    D = pipe.order
    halo = d.p * D
    for extent, mesh_extent, axis in zip(tile, geo.dims, "xy"):
        if extent <= halo:
            raise ValueError(
                f"tile {axis}-extent {extent} does not clear the halo {halo}"
            )
        if extent > mesh_extent:
            raise ValueError(
                f"tile {axis}-extent {extent} exceeds mesh extent {mesh_extent}"
            )
    # only the streamed word axis needs lane alignment
    if tile[0] % d.V:
        raise ValueError(f"tile x-extent {tile[0]} is not a multiple of V={d.V}")
    _check_capacity(sp, geo, math.prod(tile))

    n_eff = model.effective_iters(n_iter, d.p)
    passes = n_eff // d.p
    chain = sp.stages
    pw = pipe.pointwise_fields

    axes = _tile_axes(geo, tile, halo)
    tiles_per_pass = math.prod(len(a) for a in axes)
    block_cells, valid_cells = _block_valid_cells(geo, tile, halo)

    cycles = 0
    bytes_read = 0
    bytes_written = 0
    for _ in range(passes):
        new_primary = np.empty_like(state[pipe.field])
        for placement in _placements(axes):
            block_state, frame, commit = _gather_block(geo, state, placement)
            out, slots, lines = _pass_once(chain, frame, pipe.field, pw, block_state, d.V)
            cycles += slots
            bytes_read += lines * _line_bytes(geo, frame, len(pw))
            dst, src = commit
            new_primary[dst] = out[src]
            bytes_written += _box_cells(dst, new_primary) * geo.point_bytes
        state[pipe.field] = new_primary
    redundant = passes * tiles_per_pass * (block_cells - valid_cells)
    output = FieldData.from_grid(geo, state[pipe.field])
    return SimResult(
        output=output,
        cycles=cycles,
        bytes_read=bytes_read,
        bytes_written=bytes_written,
        n_iter=n_iter,
        n_iter_effective=n_eff,
        passes=passes,
        redundant_cells=redundant,
        tiles_per_pass=tiles_per_pass,
        depth_cycles_estimate=_depth_estimate(chain),
    )


@dataclass(frozen=True)
class _TilePlacement:
    origin: int      # block start in global coords (may be negative)
    size: int        # block extent
    commit_lo: int   # committed global range [commit_lo, commit_hi)
    commit_hi: int


def _tile_axes(geo: MeshGeometry, tile, halo) -> list[list[_TilePlacement]]:
    axes = []
    for extent, mesh_extent in zip(tile, geo.dims):
        if extent >= mesh_extent:
            axes.append([_TilePlacement(0, mesh_extent, 0, mesh_extent)])
            continue
        step = extent - halo
        count = _ceil_div(mesh_extent, step)
        placements = []
        for t in range(count):
            lo = t * step
            hi = min(lo + step, mesh_extent)
            placements.append(_TilePlacement(lo - halo // 2, extent, lo, hi))
        axes.append(placements)
    return axes


def _block_valid_cells(geo: MeshGeometry, tile, halo) -> tuple[int, int]:
    """Computed and valid cells of one block: a dimension covered by a
    single full-size tile has no halo shrink."""
    block = 1
    valid = 1
    for extent, mesh_extent in zip(tile, geo.dims):
        if extent >= mesh_extent:
            block *= mesh_extent
            valid *= mesh_extent
        else:
            block *= extent
            valid *= extent - halo
    depth = geo.dims[-1]
    return block * depth, valid * depth


def _placements(axes):
    if len(axes) == 1:
        for px in axes[0]:
            yield (px,)
    else:
        for py in axes[1]:
            for px in axes[0]:
                yield (px, py)


def _gather_block(geo: MeshGeometry, state, placement):
    """Clamped gather of one block plus its frame and commit slices."""
    px = placement[0]
    idx_x = np.clip(np.arange(px.origin, px.origin + px.size), 0, geo.m - 1)
    if geo.ndim == 2:
        frame = _Frame(ndim=2, stream_len=geo.n, segments=1,
                       x0=px.origin, m_loc=px.size, m_glob=geo.m)
        block = {name: np.ascontiguousarray(arr[:, idx_x])
                 for name, arr in state.items()}
        dst = (slice(None), slice(px.commit_lo, px.commit_hi), slice(None))
        src = (slice(None),
               slice(px.commit_lo - px.origin, px.commit_hi - px.origin),
               slice(None))
        return block, frame, (dst, src)
    py = placement[1]
    idx_y = np.clip(np.arange(py.origin, py.origin + py.size), 0, geo.n - 1)
    frame = _Frame(ndim=3, stream_len=geo.l, segments=1,
                   x0=px.origin, m_loc=px.size, m_glob=geo.m,
                   y0=py.origin, n_loc=py.size, n_glob=geo.n)
    block = {}
    for name, arr in state.items():
        block[name] = np.ascontiguousarray(arr[:, idx_y][:, :, idx_x])
    dst = (slice(None),
           slice(py.commit_lo, py.commit_hi),
           slice(px.commit_lo, px.commit_hi),
           slice(None))
    src = (slice(None),
           slice(py.commit_lo - py.origin, py.commit_hi - py.origin),
           slice(px.commit_lo - px.origin, px.commit_hi - px.origin),
           slice(None))
    return block, frame, (dst, src)


def _box_cells(box, arr) -> int:
    total = 1
    for sl, size in zip(box, arr.shape):
        lo, hi, _ = sl.indices(size)
        total *= hi - lo
    # exclude the arity axis from cell counts
    if len(box) == arr.ndim and arr.shape[-1] >= 1 and box[-1] == slice(None):
        total //= arr.shape[-1]
    return total


def simulate_batched(
    sp: SimPipeline, batch: Sequence[FieldSet], n_iter: int
) -> BatchResult:
    """Stack B same-shaped meshes along the stream axis and run them as
    one long stream, paying the fill cost once per pass."""
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    if not batch:
        raise ValueError("batch must not be empty")
    pipe, d = sp.pipe, sp.design
    if d.tile is not None:
        raise ValueError("tiled and batched execution cannot be combined")
    prepared = []
    for fields in batch:
        geo, state = _prepare(sp, fields)
        prepared.append((geo, state))
    geo = prepared[0][0]
    if any(g != geo for g, _ in prepared):
        raise ValueError("batch mixes mesh geometries")
    cross = geo.m if geo.ndim == 2 else geo.m * geo.n
    _check_capacity(sp, geo, cross)

    B = len(prepared)
    names = (pipe.field,) + pipe.pointwise_fields
    state = {
        name: np.concatenate([st[name] for _, st in prepared], axis=0)
        for name in names
    }
    stream_len = geo.n if geo.ndim == 2 else geo.l
    if geo.ndim == 2:
        frame = _Frame(ndim=2, stream_len=stream_len, segments=B, x0=0,
                       m_loc=geo.m, m_glob=geo.m)
    else:
        frame = _Frame(ndim=3, stream_len=stream_len, segments=B, x0=0,
                       m_loc=geo.m, m_glob=geo.m, y0=0, n_loc=geo.n,
                       n_glob=geo.n)

    n_eff = model.effective_iters(n_iter, d.p)
    passes = n_eff // d.p
    line_read = _line_bytes(geo, frame, len(pipe.pointwise_fields))
    cycles = 0
    bytes_read = 0
    bytes_written = 0
    for _ in range(passes):
        out, slots, lines = _pass_once(
            sp.stages, frame, pipe.field, pipe.pointwise_fields, state, d.V
        )
        state[pipe.field] = out
        cycles += slots
        bytes_read += lines * line_read
        bytes_written += B * geo.cells * geo.point_bytes
    outputs = tuple(
        FieldData.from_grid(geo, state[pipe.field][b * stream_len : (b + 1) * stream_len])
        for b in range(B)
    )
    return BatchResult(
        outputs=outputs,
        cycles=cycles,
        cycles_per_mesh=cycles / B,
        bytes_read=bytes_read,
        bytes_written=bytes_written,
        n_iter=n_iter,
        n_iter_effective=n_eff,
        passes=passes,
        depth_cycles_estimate=_depth_estimate(sp.stages),
    )
