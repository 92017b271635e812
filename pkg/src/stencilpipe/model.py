"""Closed-form performance and resource model for streaming stencil pipelines.

All cycle formulas count V-wide issue slots of the fully pipelined
datapath.  They are exact integers whenever the inputs divide evenly and
they scale linearly in the iteration count.  Fixed-latency pipeline fill
of the arithmetic units is excluded here and reported separately by the
simulator.

Conventions:

- m, n, l   mesh extents, m streaming (fastest), l outermost (3D only)
- V         vectorisation factor (cells per cycle)
- p         iteration unroll depth (chained stage groups)
- D         stencil order of one group traversal
- M, N      tile extents across the non-streamed dimensions
- B         number of independent meshes stacked into one stream

Iteration counts that do not divide by p are rounded up to whole chain
passes; m is padded up to a multiple of V inside every cycle formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    DesignPoint,
    MeshGeometry,
    ResourceProfile,
    Work,
    as_pipeline,
    pow2_floor,
    validate_design,
)

__all__ = [
    "max_vector_factor",
    "max_vector_factor_raw",
    "bandwidth_feasible",
    "unroll_limit_dsp",
    "unroll_limit_mem",
    "cycles_2d",
    "cycles_3d",
    "cycles_per_cell_2d",
    "batched_cycles_2d",
    "batched_cycles_3d",
    "batched_cycles_per_mesh_2d",
    "tile_valid_points_2d",
    "tile_valid_points_3d",
    "tile_cycles_2d",
    "tile_cycles_3d",
    "tile_throughput_2d",
    "tile_throughput_3d",
    "tile_throughput_dsp_bound_2d",
    "tile_throughput_dsp_bound_3d",
    "optimal_tile_width",
    "optimal_unroll_tiled",
    "tile_count",
    "tiled_cycles_total",
    "effective_iters",
    "Limits",
    "ModelReport",
    "predict",
]


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def effective_iters(n_iter: int, p: int) -> int:
    """Iterations actually executed: n_iter rounded up to a multiple of p."""
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    return _ceil_div(n_iter, p) * p


# ---------------------------------------------------------------------------
# Feasibility bounds
# ---------------------------------------------------------------------------


def max_vector_factor_raw(bw_bytes_per_s: float, freq_hz: float, elem_bytes: int) -> int:
    """Largest V whose read plus write streams fit one channel:
    bw >= 2 * V * f * elem_bytes.  Returns 0 when even V = 1 does not fit."""
    if bw_bytes_per_s <= 0 or freq_hz <= 0 or elem_bytes < 1:
        raise ValueError("bandwidth, frequency and element size must be positive")
    return math.floor(bw_bytes_per_s / (2.0 * freq_hz * elem_bytes))


def max_vector_factor(bw_bytes_per_s: float, freq_hz: float, elem_bytes: int) -> int:
    """Bandwidth-bound V rounded down to a power of two (burst alignment)."""
    return pow2_floor(max_vector_factor_raw(bw_bytes_per_s, freq_hz, elem_bytes))


def bandwidth_feasible(
    bw_bytes_per_s: float, V: int, freq_hz: float, elem_bytes: int
) -> bool:
    return bw_bytes_per_s >= 2.0 * V * freq_hz * elem_bytes


def unroll_limit_dsp(dsp_total: int, util_cap: float, V: int, dsp_cost: int) -> int:
    """Deepest unroll the DSP budget sustains: each of the p chained groups
    replicates the V-wide update datapath."""
    if V < 1 or dsp_cost < 1:
        raise ValueError("V and dsp_cost must be >= 1")
    budget = round(util_cap * dsp_total)
    return budget // (V * dsp_cost)


def unroll_limit_mem(
    mem_bytes: int, util_cap: float, point_bytes: int, D: int, extent_cells: int
) -> int:
    """Deepest unroll the on-chip buffer budget sustains.  Each group
    buffers D lines of ``extent_cells`` points (rows in 2D, planes in 3D;
    the tile cross-section when tiled)."""
    if point_bytes < 1 or D < 1 or extent_cells < 1:
        raise ValueError("point_bytes, D and extent_cells must be >= 1")
    budget = round(util_cap * mem_bytes)
    return budget // (point_bytes * D * extent_cells)


# ---------------------------------------------------------------------------
# Full-mesh streaming cycles
# ---------------------------------------------------------------------------


def cycles_2d(m: int, n: int, V: int, p: int, D: int, n_iter: int) -> int:
    """Issue slots to stream a 2D mesh through a p-deep chain n_iter times.
    Each pass injects n rows plus p*D/2 fill rows of ceil(m/V) slots."""
    _check_mesh(m, n, V=V, p=p, D=D)
    passes = effective_iters(n_iter, p) // p
    return passes * _ceil_div(m, V) * (n + p * D // 2)


def cycles_3d(m: int, n: int, l: int, V: int, p: int, D: int, n_iter: int) -> int:
    """3D variant: each pass injects l planes plus p*D/2 fill planes of
    ceil(m/V) * n slots."""
    _check_mesh(m, n, l, V=V, p=p, D=D)
    passes = effective_iters(n_iter, p) // p
    return passes * _ceil_div(m, V) * n * (l + p * D // 2)


def cycles_per_cell_2d(n: int, V: int, p: int, D: int) -> float:
    """Amortised slots per cell update: 1/V plus the fill share p*D/(2*n*V)."""
    _check_mesh(1, n, V=V, p=p, D=D)
    return 1.0 / V + p * D / (2.0 * n * V)


def batched_cycles_2d(m: int, n: int, V: int, p: int, D: int, B: int, n_iter: int) -> int:
    """Total slots for B stacked 2D meshes: one fill term amortised over
    the whole batch, B*n data rows per pass."""
    _check_mesh(m, n, V=V, p=p, D=D)
    if B < 1:
        raise ValueError("B must be >= 1")
    passes = effective_iters(n_iter, p) // p
    return passes * _ceil_div(m, V) * (B * n + p * D // 2)


def batched_cycles_3d(
    m: int, n: int, l: int, V: int, p: int, D: int, B: int, n_iter: int
) -> int:
    _check_mesh(m, n, l, V=V, p=p, D=D)
    if B < 1:
        raise ValueError("B must be >= 1")
    passes = effective_iters(n_iter, p) // p
    return passes * _ceil_div(m, V) * n * (B * l + p * D // 2)


def batched_cycles_per_mesh_2d(m: int, n: int, V: int, p: int, D: int, B: int) -> float:
    """Per-mesh share of one batched pass: ceil(m/V) * (n + p*D/(2*B))."""
    return batched_cycles_2d(m, n, V, p, D, B, n_iter=p) / B


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------


def _check_tile(M: int, p: int, D: int) -> None:
    if M <= p * D:
        raise ValueError(f"tile extent {M} must exceed halo p*D = {p * D}")


def tile_valid_points_2d(M: int, n: int, p: int, D: int) -> int:
    """Non-redundant points one 2D strip tile contributes per chain pass."""
    _check_tile(M, p, D)
    return (M - p * D) * n


def tile_valid_points_3d(M: int, N: int, l: int, p: int, D: int) -> int:
    """Non-redundant points one 3D column tile contributes per chain pass."""
    _check_tile(M, p, D)
    _check_tile(N, p, D)
    return (M - p * D) * (N - p * D) * l


def tile_cycles_2d(M: int, n: int, V: int, p: int, D: int) -> float:
    """Per-iteration slot cost of one strip tile: ceil(M/V)*(n + p*D/2)/p."""
    _check_tile(M, p, D)
    return _ceil_div(M, V) * (n + p * D // 2) / p


def tile_cycles_3d(M: int, N: int, l: int, V: int, p: int, D: int) -> float:
    """Per-iteration slot cost of one column tile:
    ceil(M/V)*N*(l + p*D/2)/p."""
    _check_tile(M, p, D)
    _check_tile(N, p, D)
    return _ceil_div(M, V) * N * (l + p * D // 2) / p


def tile_throughput_2d(M: int, n: float, V: int, p: int, D: int) -> float:
    """Valid cell updates per cycle for strip tiles.  ``n`` may be inf to
    take the deep-mesh limit p*V*(1 - p*D/M)."""
    _check_tile(M, p, D)
    edge = 1.0 - p * D / M
    if math.isinf(n):
        return edge * p * V
    return edge * p * V * n / (n + p * D / 2.0)


def tile_throughput_3d(M: int, N: int, l: float, V: int, p: int, D: int) -> float:
    """Valid cell updates per cycle for column tiles; ``l`` may be inf."""
    _check_tile(M, p, D)
    _check_tile(N, p, D)
    edge = (1.0 - p * D / M) * (1.0 - p * D / N)
    if math.isinf(l):
        return edge * p * V
    return edge * p * V * l / (l + p * D / 2.0)


def tile_throughput_dsp_bound_2d(
    M: int, p: int, D: int, dsp_total: int, util_cap: float, dsp_cost: int, n: float
) -> float:
    """Throughput ceiling when the whole DSP budget is spent, p*V = budget/G."""
    _check_tile(M, p, D)
    pv = util_cap * dsp_total / dsp_cost
    if math.isinf(n):
        return (1.0 - p * D / M) * pv
    return (1.0 - p * D / M) * pv * n / (n + p * D / 2.0)


def tile_throughput_dsp_bound_3d(
    M: int,
    N: int,
    p: int,
    D: int,
    dsp_total: int,
    util_cap: float,
    dsp_cost: int,
    l: float,
) -> float:
    _check_tile(M, p, D)
    _check_tile(N, p, D)
    pv = util_cap * dsp_total / dsp_cost
    edge = (1.0 - p * D / M) * (1.0 - p * D / N)
    if math.isinf(l):
        return edge * pv
    return edge * pv * l / (l + p * D / 2.0)


def optimal_tile_width(mem_budget_bytes: float, point_bytes: int, p: int, D: int) -> float:
    """Square-tile width that maximises throughput when the buffer budget
    is saturated: sqrt(budget / (point_bytes * p * D)).  Callers round
    down to a multiple of V."""
    if mem_budget_bytes <= 0 or point_bytes < 1 or p < 1 or D < 1:
        raise ValueError("budget, point_bytes, p and D must be positive")
    return math.sqrt(mem_budget_bytes / (point_bytes * p * D))


def optimal_unroll_tiled(M: int, D: int) -> int:
    """Unroll depth maximising square-tile throughput at fixed width:
    M / (3*D), rounded to the nearest integer (half up), at least 1."""
    if M < 1 or D < 1:
        raise ValueError("M and D must be >= 1")
    return max(1, math.floor(M / (3.0 * D) + 0.5))


def tile_count(extent: int, M: int, p: int, D: int) -> int:
    """Tiles needed to cover one mesh dimension with a p*D halo.  A tile
    spanning the whole extent counts once with no halo shrink."""
    _check_tile(M, p, D)
    if M >= extent:
        return 1
    return _ceil_div(extent, M - p * D)


def tiled_cycles_total(
    g: MeshGeometry, tile: tuple[int, ...], V: int, p: int, D: int, n_iter: int
) -> int:
    """Total slots for tiled execution: every tile streams back to back
    with its own fill, once per chain pass."""
    passes = effective_iters(n_iter, p) // p
    if g.ndim == 2:
        (M,) = tile
        tiles = tile_count(g.m, M, p, D)
        per_tile = _ceil_div(M, V) * (g.n + p * D // 2)
    else:
        M, N = tile
        tiles = tile_count(g.m, M, p, D) * tile_count(g.n, N, p, D)
        per_tile = _ceil_div(M, V) * N * (g.l + p * D // 2)
    return passes * tiles * per_tile


def _check_mesh(m: int, n: int, l: int = 1, *, V: int, p: int, D: int) -> None:
    if m < 1 or n < 1 or l < 1:
        raise ValueError("mesh extents must be >= 1")
    if V < 1 or p < 1:
        raise ValueError("V and p must be >= 1")
    if D < 2 or D % 2:
        raise ValueError(f"stencil order must be a positive even number, got {D}")


# ---------------------------------------------------------------------------
# Whole-design prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Limits:
    """Resource-derived bounds for one design point.

    ``m_opt`` is the square-tile width that saturates the buffer budget at
    this unroll depth and ``p_max`` the best unroll for that width (or for
    the design's own tile width when one is set).
    """

    v_max_raw: int
    v_max: int
    p_dsp: int
    p_mem: int
    p_max: int
    m_opt: float


@dataclass(frozen=True)
class ModelReport:
    """Predicted performance of one design point on one mesh.

    ``throughput_cells_per_cycle`` counts valid (non-redundant) updates;
    ``valid_ratio`` is the valid fraction of computed points (1.0 unless
    tiled).  ``runtime_s`` is cycles over the design clock.
    """

    mode: str
    feasible: bool
    violations: tuple[str, ...]
    n_iter: int
    n_iter_effective: int
    cycles: int
    runtime_s: float
    throughput_cells_per_cycle: float
    valid_ratio: float
    bytes_read: int
    bytes_written: int
    bandwidth_bytes_per_s: float
    limits: Limits


def _traffic(
    g: MeshGeometry, pipe, d: DesignPoint, passes: int
) -> tuple[int, int]:
    """Logical off-chip bytes over the whole run.  Every pass reads the
    primary field once plus each pointwise coefficient field once, and
    writes the primary field once.  Tiled passes re-read halo overlap;
    writes cover each point exactly once."""
    pw = len(pipe.pointwise_fields)
    scalar = g.element_bytes
    B = d.batch
    if d.tile is None:
        cells = g.cells
        read_pass = B * cells * (g.point_bytes + pw * scalar)
        write_pass = B * cells * g.point_bytes
    else:
        D = pipe.order
        if g.ndim == 2:
            (M,) = d.tile
            block_cells = M * g.n
            tiles = tile_count(g.m, M, d.p, D)
        else:
            M, N = d.tile
            block_cells = M * N * g.l
            tiles = tile_count(g.m, M, d.p, D) * tile_count(g.n, N, d.p, D)
        read_pass = tiles * block_cells * (g.point_bytes + pw * scalar)
        write_pass = g.cells * g.point_bytes
    return passes * read_pass, passes * write_pass


def predict(
    d: DesignPoint,
    work: Work,
    g: MeshGeometry,
    r: ResourceProfile,
    n_iter: int,
) -> ModelReport:
    """Evaluate the analytic model for one design point.

    Infeasible designs still produce a full report, flagged through
    ``feasible`` and ``violations``.  Tiling and batching are separate
    execution modes and cannot be combined.
    """
    pipe = as_pipeline(work)
    if d.tile is not None and d.batch > 1:
        raise ValueError("tiled and batched execution cannot be combined")
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")

    D = pipe.order
    f = d.clock(r)
    feas = validate_design(d, r, pipe, g)

    n_eff = effective_iters(n_iter, d.p)
    passes = n_eff // d.p

    if d.tile is not None:
        mode = "tiled"
        cycles = tiled_cycles_total(g, d.tile, d.V, d.p, D, n_iter)
        if g.ndim == 2:
            (M,) = d.tile
            thru = tile_throughput_2d(M, g.n, d.V, d.p, D)
            ratio = (M - d.p * D) / M
        else:
            M, N = d.tile
            thru = tile_throughput_3d(M, N, g.l, d.V, d.p, D)
            ratio = ((M - d.p * D) / M) * ((N - d.p * D) / N)
    elif d.batch > 1:
        mode = "batched"
        if g.ndim == 2:
            cycles = batched_cycles_2d(g.m, g.n, d.V, d.p, D, d.batch, n_iter)
        else:
            cycles = batched_cycles_3d(g.m, g.n, g.l, d.V, d.p, D, d.batch, n_iter)
        thru = d.batch * g.cells * n_eff / cycles if cycles else 0.0
        ratio = 1.0
    else:
        mode = "baseline"
        if g.ndim == 2:
            cycles = cycles_2d(g.m, g.n, d.V, d.p, D, n_iter)
        else:
            cycles = cycles_3d(g.m, g.n, g.l, d.V, d.p, D, n_iter)
        thru = g.cells * n_eff / cycles if cycles else 0.0
        ratio = 1.0

    runtime = cycles / f
    bytes_read, bytes_written = _traffic(g, pipe, d, passes)
    bw = (bytes_read + bytes_written) / runtime if runtime else 0.0

    mem_budget = r.mem_budget_bytes
    width = optimal_tile_width(mem_budget, g.point_bytes, d.p, D) if mem_budget else 0.0
    if d.tile is not None:
        p_best = optimal_unroll_tiled(d.tile[0], D)
    else:
        p_best = optimal_unroll_tiled(max(1, math.floor(width)), D) if width >= 1 else 1
    limits = Limits(
        v_max_raw=max_vector_factor_raw(r.channel_bw_bytes_per_s, f, g.point_bytes)
        * r.num_ports,
        v_max=feas.v_limit,
        p_dsp=feas.p_dsp,
        p_mem=feas.p_mem,
        p_max=p_best,
        m_opt=width,
    )

    return ModelReport(
        mode=mode,
        feasible=feas.ok,
        violations=feas.violations,
        n_iter=n_iter,
        n_iter_effective=n_eff,
        cycles=cycles,
        runtime_s=runtime,
        throughput_cells_per_cycle=thru,
        valid_ratio=ratio,
        bytes_read=bytes_read,
        bytes_written=bytes_written,
        bandwidth_bytes_per_s=bw,
        limits=limits,
    )
