"""Design-space sweep: enumerate feasible design points and rank them.

The sweep walks frequency, vector width, unroll depth, tile size and
batch size, filters every candidate through the closed-form resource
bounds, evaluates the survivors with the analytic model and sorts them
into a total order.  Evaluation of the points is independent, so a
worker pool may be used; the merged ranking does not depend on it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .core import (
    DesignPoint,
    MeshGeometry,
    ResourceProfile,
    Work,
    as_pipeline,
)
from .model import (
    ModelReport,
    max_vector_factor,
    optimal_tile_width,
    predict,
    unroll_limit_dsp,
    unroll_limit_mem,
)

__all__ = ["SweepConstraints", "ExploreResult", "enumerate_designs", "best_design"]


@dataclass(frozen=True)
class SweepConstraints:
    """Pins for the sweep.  A None field means sweep the default range;
    a tuple restricts the sweep to exactly those values.  ``tiles`` may
    contain None to keep untiled execution among pinned candidates."""

    V: tuple[int, ...] | None = None
    p: tuple[int, ...] | None = None
    tiles: tuple[tuple[int, ...] | None, ...] | None = None
    batches: tuple[int, ...] = (1, 10, 50, 100, 1000)
    freqs: tuple[float, ...] = (300e6, 250e6)
    n_iter: int = 1000

    def __post_init__(self):
        if self.V is not None and (not self.V or min(self.V) < 1):
            raise ValueError("pinned V values must be >= 1")
        if self.p is not None and (not self.p or min(self.p) < 1):
            raise ValueError("pinned p values must be >= 1")
        if not self.batches or min(self.batches) < 1:
            raise ValueError("batch sizes must be >= 1")
        if not self.freqs or min(self.freqs) <= 0:
            raise ValueError("frequencies must be positive")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")


@dataclass(frozen=True)
class ExploreResult:
    """Ranked feasible designs.  Behaves like a sequence of
    (DesignPoint, ModelReport) pairs; when empty, ``binding`` names the
    constraint that emptied the space."""

    entries: tuple[tuple[DesignPoint, ModelReport], ...]
    binding: str | None = None

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


# binding-cause precedence: report the bound that cut the space first
_CAUSE_ORDER = ("p_dsp<1", "p_mem<1", "V<1", "V>v_max", "p>limit", "tile")


def _pow2_values(limit: int) -> list[int]:
    out = []
    v = 1
    while v <= limit:
        out.append(v)
        v *= 2
    return out


def _auto_tiles(
    r: ResourceProfile, g: MeshGeometry, V: int, p: int, D: int
) -> list[tuple[int, ...]]:
    """Candidate tile widths for one (V, p): lane-aligned powers-of-two
    steps up to twice the buffer-optimal width, plus the optimum itself
    rounded down to a lane multiple.  Square tiles in 3D."""
    budget = r.mem_budget_bytes
    if budget < 1:
        return []
    width = optimal_tile_width(budget, g.point_bytes, p, D)
    cap = 2.0 * width
    sizes = set()
    m = V
    while m <= cap:
        sizes.add(m)
        m *= 2
    opt = V * math.floor(width / V)
    if opt >= V:
        sizes.add(opt)
    tiles = []
    for m in sorted(sizes):
        tiles.append((m,) if g.ndim == 2 else (m, m))
    return tiles


def _candidates(
    r: ResourceProfile, pipe, g: MeshGeometry, c: SweepConstraints
) -> tuple[list[DesignPoint], set[str]]:
    D = pipe.order
    causes: set[str] = set()
    out: list[DesignPoint] = []
    untiled_extent = g.m if g.ndim == 2 else g.m * g.n
    pinned_tiles = c.tiles
    for f in c.freqs:
        v_chan = max_vector_factor(r.channel_bw_bytes_per_s, f, g.point_bytes)
        if v_chan < 1:
            causes.add("V<1")
            continue
        v_limit = v_chan * r.num_ports
        vs = c.V if c.V is not None else _pow2_values(v_limit)
        for V in vs:
            if V > v_limit:
                causes.add("V>v_max")
                continue
            p_dsp = unroll_limit_dsp(r.dsp_total, r.dsp_util_cap, V, pipe.dsp_cost)
            if p_dsp < 1:
                causes.add("p_dsp<1")
                continue

            want_untiled = pinned_tiles is None or None in pinned_tiles
            if want_untiled:
                p_mem = unroll_limit_mem(
                    r.onchip_mem_bytes, r.mem_util_cap, g.point_bytes, D,
                    untiled_extent,
                )
                if p_mem < 1:
                    causes.add("p_mem<1")
                else:
                    p_hi = min(p_dsp, p_mem)
                    ps = c.p if c.p is not None else range(1, p_hi + 1)
                    for p in ps:
                        if p > p_hi:
                            causes.add("p>limit")
                            continue
                        for B in c.batches:
                            out.append(DesignPoint(V=V, p=p, batch=B, freq_hz=f))

            ps = c.p if c.p is not None else range(1, p_dsp + 1)
            for p in ps:
                if p > p_dsp:
                    causes.add("p>limit")
                    continue
                if pinned_tiles is None:
                    tiles = _auto_tiles(r, g, V, p, D)
                else:
                    tiles = [t for t in pinned_tiles if t is not None]
                for tile in tiles:
                    if len(tile) != g.ndim - 1:
                        raise ValueError(
                            f"tile rank {len(tile)} does not fit a {g.ndim}D mesh"
                        )
                    if min(tile) <= p * D:
                        causes.add("tile")
                        continue
                    if any(t > e for t, e in zip(tile, g.dims)):
                        causes.add("tile")
                        continue
                    p_mem = unroll_limit_mem(
                        r.onchip_mem_bytes, r.mem_util_cap, g.point_bytes, D,
                        math.prod(tile),
                    )
                    if p > p_mem:
                        causes.add("p_mem<1" if p_mem < 1 else "p>limit")
                        continue
                    out.append(DesignPoint(V=V, p=p, tile=tile, freq_hz=f))
    return out, causes


def _sort_key(entry: tuple[DesignPoint, ModelReport]):
    d, rep = entry
    tile_cells = math.prod(d.tile) if d.tile is not None else 0
    return (
        -rep.throughput_cells_per_cycle,
        rep.runtime_s,
        d.p,
        d.V,
        tile_cells,
        d.batch,
        -(d.freq_hz or 0.0),
    )


def enumerate_designs(
    r: ResourceProfile,
    work: Work,
    g: MeshGeometry,
    constraints: SweepConstraints | None = None,
    jobs: int = 1,
) -> ExploreResult:
    """Sweep the design space and rank every feasible point.

    Ranking: predicted valid-cell throughput, then runtime, then the
    tie-breaks smaller p, smaller V, smaller tile, smaller batch, higher
    clock.  An empty result names the binding constraint.
    """
    pipe = as_pipeline(work)
    c = constraints if constraints is not None else SweepConstraints()
    cands, causes = _candidates(r, pipe, g, c)

    def evaluate(d: DesignPoint) -> tuple[DesignPoint, ModelReport]:
        return d, predict(d, pipe, g, r, c.n_iter)

    if jobs > 1 and len(cands) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            evaluated = list(pool.map(evaluate, cands))
    else:
        evaluated = [evaluate(d) for d in cands]

    entries = sorted((e for e in evaluated if e[1].feasible), key=_sort_key)
    if entries:
        return ExploreResult(entries=tuple(entries))
    for cause in _CAUSE_ORDER:
        if cause in causes:
            return ExploreResult(entries=(), binding=cause)
    return ExploreResult(entries=(), binding="empty sweep")


def best_design(
    r: ResourceProfile,
    work: Work,
    g: MeshGeometry,
    constraints: SweepConstraints | None = None,
    jobs: int = 1,
) -> tuple[DesignPoint, ModelReport]:
    """Head of the ranking; raises naming the binding constraint when
    nothing is feasible."""
    result = enumerate_designs(r, work, g, constraints, jobs=jobs)
    if not result.entries:
        raise ValueError(f"no feasible design point: binding constraint {result.binding}")
    return result.entries[0]
