"""Dataflow simulator: structure, bitwise agreement with the full-mesh
executor, cycle-exactness against the closed forms, traffic counters and
capacity policing.

Every numerical comparison is exact. The two executors share nothing but
the domain types, so agreement is evidence, not tautology.
"""

import dataclasses

import numpy as np
import pytest

from stencilpipe import (
    CapacityError,
    DesignPoint,
    MeshGeometry,
    PipelineSpec,
    ResourceProfile,
    Stage,
    Replace,
    build_pipeline,
    run_reference,
    simulate,
    simulate_batched,
    simulate_tiled,
)
from stencilpipe.apps import jacobi_3d, poisson_2d, rtm_forward
from stencilpipe.model import (
    batched_cycles_2d,
    batched_cycles_3d,
    cycles_2d,
    cycles_3d,
    tiled_cycles_total,
)
from stencilpipe.simulator import WindowBuffer

from helpers import rand_field, rtm_fields, star5_2d

JACOBI_K = (0.11, 0.07, 0.13, 0.31, 0.05, 0.17, 0.16)
RTM_COEFFS = [-2.847] + [(-1.0) ** i * (0.02 + 0.003 * i) for i in range(24)]


def _rtm():
    return rtm_forward(RTM_COEFFS, dt=0.001953125, rho_weight=0.6, mu_weight=0.4)


# --- structure ----------------------------------------------------------------


def test_chain_replicates_stage_group():
    sp = build_pipeline(_rtm(), DesignPoint(V=1, p=3))
    assert len(sp.stages) == 12
    assert [s.kernel.name for s in sp.stages[:4]] == [s.kernel.name for s in sp.stages[4:8]]


def test_window_buffer_geometry():
    g2 = MeshGeometry((24, 18))
    bufs = build_pipeline(poisson_2d(), DesignPoint(V=4, p=2)).window_buffers(g2)
    assert len(bufs) == 2
    assert all(b.capacity_cells == 2 * 24 for b in bufs)
    g3 = MeshGeometry((16, 10, 8))
    (buf,) = build_pipeline(jacobi_3d(*JACOBI_K), DesignPoint(V=4, p=1)).window_buffers(g3)
    assert buf.capacity_cells == 2 * 16 * 10
    # a tiled design buffers the tile cross-section, not the mesh
    d = DesignPoint(V=4, p=1, tile=(12, 9))
    (buf,) = build_pipeline(jacobi_3d(*JACOBI_K), d).window_buffers(g3)
    assert buf.capacity_cells == 2 * 12 * 9
    rtm_bufs = build_pipeline(_rtm(), DesignPoint(V=1, p=1)).window_buffers(g3)
    assert len(rtm_bufs) == 4
    assert all(b.capacity_cells == 8 * 16 * 10 for b in rtm_bufs)


def test_window_buffer_line_indexing():
    wb = WindowBuffer(order=2, line_cells=8, lanes=1, span_cells=3)
    for item in ("a", "b", "c"):
        wb.push(item)
    assert (wb.line(-1), wb.line(0), wb.line(1)) == ("a", "b", "c")
    assert wb.accepted == 3
    with pytest.raises(ValueError):
        WindowBuffer(order=-1, line_cells=8, lanes=1, span_cells=3)


def test_sim_pipeline_is_frozen():
    sp = build_pipeline(poisson_2d(), DesignPoint(V=1, p=1))
    with pytest.raises(dataclasses.FrozenInstanceError):
        sp.design = DesignPoint(V=2, p=1)


def test_build_pipeline_rejects_structural_mismatches():
    with pytest.raises(ValueError):
        build_pipeline(poisson_2d(), DesignPoint(V=1, p=1, tile=(16,), batch=2))
    with pytest.raises(ValueError):
        build_pipeline(jacobi_3d(*JACOBI_K), DesignPoint(V=1, p=1, tile=(16,)))
    with pytest.raises(ValueError):
        build_pipeline(poisson_2d(), DesignPoint(V=1, p=1, tile=(16, 16)))


# --- untiled runs vs the reference ---------------------------------------------


@pytest.mark.parametrize("V,p", [(1, 1), (4, 1), (4, 3), (8, 2)])
def test_poisson_untiled_bitwise(V, p):
    g = MeshGeometry((24, 18))
    fd = rand_field(g, np.random.default_rng(21))
    res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=V, p=p)), fd, 6)
    want = run_reference(poisson_2d(), fd, res.n_iter_effective)
    np.testing.assert_array_equal(res.output.grid(), want.grid())
    assert res.cycles == cycles_2d(24, 18, V, p, 2, 6)


@pytest.mark.parametrize("V,p", [(1, 1), (4, 2)])
def test_jacobi_untiled_bitwise(V, p):
    g = MeshGeometry((16, 10, 8))
    fd = rand_field(g, np.random.default_rng(22))
    pipe = jacobi_3d(*JACOBI_K)
    res = simulate(build_pipeline(pipe, DesignPoint(V=V, p=p)), fd, 4)
    want = run_reference(pipe, fd, res.n_iter_effective)
    np.testing.assert_array_equal(res.output.grid(), want.grid())
    assert res.cycles == cycles_3d(16, 10, 8, V, p, 2, 4)


@pytest.mark.parametrize("p", [1, 2])
def test_rtm_untiled_bitwise(p):
    fields = rtm_fields((12, 10, 12), np.random.default_rng(23))
    pipe = _rtm()
    res = simulate(build_pipeline(pipe, DesignPoint(V=4, p=p)), fields, 2)
    want = run_reference(pipe, fields, res.n_iter_effective)
    np.testing.assert_array_equal(res.output.grid(), want.grid())
    # the fused group chains four order-8 stages: D = 32
    assert res.cycles == cycles_3d(12, 10, 12, 4, p, 32, 2)


def test_iteration_rounding_is_visible():
    g = MeshGeometry((16, 12))
    fd = rand_field(g, np.random.default_rng(24))
    res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=4, p=3)), fd, 7)
    assert (res.n_iter, res.n_iter_effective, res.passes) == (7, 9, 3)
    want = run_reference(poisson_2d(), fd, 9)
    np.testing.assert_array_equal(res.output.grid(), want.grid())


def test_zero_iterations():
    g = MeshGeometry((16, 12))
    fd = rand_field(g, np.random.default_rng(25))
    res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=4, p=2)), fd, 0)
    assert res.cycles == 0 and res.passes == 0
    np.testing.assert_array_equal(res.output.grid(), fd.grid())


# --- traffic counters -----------------------------------------------------------


def test_poisson_traffic_per_pass():
    g = MeshGeometry((24, 18))
    fd = rand_field(g, np.random.default_rng(26))
    res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=4, p=2)), fd, 4)
    assert res.passes == 2
    assert res.bytes_read == 2 * g.cells * 4
    assert res.bytes_written == 2 * g.cells * 4


def test_rtm_traffic_per_pass():
    fields = rtm_fields((12, 10, 10), np.random.default_rng(27))
    res = simulate(build_pipeline(_rtm(), DesignPoint(V=4, p=1)), fields, 1)
    cells = 12 * 10 * 10
    # one pass reads the 6-component state plus both material planes once
    assert res.bytes_read == cells * (6 * 4 + 2 * 4)
    # and writes the state once; the RK4 intermediates never leave chip
    assert res.bytes_written == cells * 6 * 4


def test_traffic_rate_independent_of_unroll():
    g = MeshGeometry((24, 18))
    fd = rand_field(g, np.random.default_rng(28))
    rates = set()
    for p in (1, 2, 3):
        res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=4, p=p)), fd, 6)
        rates.add((res.bytes_read // res.passes, res.bytes_written // res.passes))
    assert len(rates) == 1  # deeper chains move no extra data per pass


# --- tiled runs -----------------------------------------------------------------


def test_poisson_tiled_bitwise():
    g = MeshGeometry((40, 20))
    fd = rand_field(g, np.random.default_rng(29))
    d = DesignPoint(V=4, p=1, tile=(16,))
    res = simulate_tiled(build_pipeline(poisson_2d(), d), fd, 2)
    assert res.tiles_per_pass == 3
    want = run_reference(poisson_2d(), fd, 2)
    np.testing.assert_array_equal(res.output.grid(), want.grid())
    assert res.cycles == tiled_cycles_total(g, (16,), 4, 1, 2, 2)
    # each block computes 16 columns but only 14 are committed as valid
    assert res.redundant_cells == 2 * 3 * (2 * 20)


def test_poisson_tiled_matches_untiled_counters():
    g = MeshGeometry((40, 20))
    fd = rand_field(g, np.random.default_rng(29))
    d = DesignPoint(V=4, p=1, tile=(16,))
    res = simulate_tiled(build_pipeline(poisson_2d(), d), fd, 2)
    # writes cover the mesh exactly once per pass; reads include overlap
    assert res.bytes_written == 2 * g.cells * 4
    assert res.bytes_read == 2 * 3 * 16 * 20 * 4


def test_jacobi_tiled_bitwise():
    g = MeshGeometry((24, 18, 6))
    fd = rand_field(g, np.random.default_rng(30))
    pipe = jacobi_3d(*JACOBI_K)
    d = DesignPoint(V=4, p=1, tile=(12, 9))
    res = simulate_tiled(build_pipeline(pipe, d), fd, 2)
    assert res.tiles_per_pass == 3 * 3
    want = run_reference(pipe, fd, 2)
    np.testing.assert_array_equal(res.output.grid(), want.grid())
    assert res.cycles == tiled_cycles_total(g, (12, 9), 4, 1, 2, 2)


def test_rtm_tiled_bitwise():
    fields = rtm_fields((48, 40, 9), np.random.default_rng(31))
    pipe = _rtm()
    d = DesignPoint(V=4, p=1, tile=(44, 40))
    res = simulate_tiled(build_pipeline(pipe, d), fields, 1)
    assert res.tiles_per_pass == 4  # y covered by one full-extent tile
    want = run_reference(pipe, fields, 1)
    np.testing.assert_array_equal(res.output.grid(), want.grid())


def test_tiled_wide_mesh_bitwise():
    g = MeshGeometry((512, 64))
    fd = rand_field(g, np.random.default_rng(32))
    d = DesignPoint(V=8, p=4, tile=(128,))
    sp = build_pipeline(poisson_2d(), d)
    res = simulate_tiled(sp, fd, 4)
    assert res.tiles_per_pass == 5
    base = simulate(build_pipeline(poisson_2d(), DesignPoint(V=8, p=4)), fd, 4)
    np.testing.assert_array_equal(res.output.grid(), base.output.grid())
    want = run_reference(poisson_2d(), fd, 4)
    np.testing.assert_array_equal(res.output.grid(), want.grid())


def test_tile_argument_validation():
    g = MeshGeometry((40, 20))
    fd = rand_field(g, np.random.default_rng(33))
    sp = build_pipeline(poisson_2d(), DesignPoint(V=4, p=1))
    with pytest.raises(ValueError, match="no tile extents"):
        simulate_tiled(sp, fd, 1)
    with pytest.raises(ValueError, match="rank"):
        simulate_tiled(sp, fd, 1, tile=(16, 16))
    with pytest.raises(ValueError, match="multiple of V"):
        simulate_tiled(sp, fd, 1, tile=(18,))
    with pytest.raises(ValueError, match="halo"):
        sp4 = build_pipeline(poisson_2d(), DesignPoint(V=4, p=6))
        simulate_tiled(sp4, fd, 6, tile=(12,))
    with pytest.raises(ValueError, match="exceeds mesh"):
        simulate_tiled(sp, fd, 1, tile=(44,))


# --- batched runs ----------------------------------------------------------------


def test_poisson_batched_bitwise():
    g = MeshGeometry((24, 18))
    rng = np.random.default_rng(34)
    batch = [rand_field(g, rng) for _ in range(3)]
    sp = build_pipeline(poisson_2d(), DesignPoint(V=4, p=2, batch=3))
    res = simulate_batched(sp, batch, 4)
    assert res.cycles == batched_cycles_2d(24, 18, 4, 2, 2, 3, 4)
    assert res.cycles_per_mesh == res.cycles / 3
    for fd, out in zip(batch, res.outputs):
        want = run_reference(poisson_2d(), fd, res.n_iter_effective)
        np.testing.assert_array_equal(out.grid(), want.grid())


def test_jacobi_batched_bitwise():
    g = MeshGeometry((12, 8, 6))
    rng = np.random.default_rng(35)
    batch = [rand_field(g, rng) for _ in range(2)]
    pipe = jacobi_3d(*JACOBI_K)
    sp = build_pipeline(pipe, DesignPoint(V=4, p=1, batch=2))
    res = simulate_batched(sp, batch, 2)
    assert res.cycles == batched_cycles_3d(12, 8, 6, 4, 1, 2, 2, 2)
    for fd, out in zip(batch, res.outputs):
        want = run_reference(pipe, fd, 2)
        np.testing.assert_array_equal(out.grid(), want.grid())


def test_rtm_batched_bitwise():
    rng = np.random.default_rng(36)
    pipe = _rtm()
    sets = [rtm_fields((12, 10, 10), rng) for _ in range(2)]
    sp = build_pipeline(pipe, DesignPoint(V=4, p=1, batch=2))
    res = simulate_batched(sp, sets, 1)
    for fields, out in zip(sets, res.outputs):
        want = run_reference(pipe, fields, 1)
        np.testing.assert_array_equal(out.grid(), want.grid())


def test_batch_amortises_fill_exactly():
    g = MeshGeometry((24, 18))
    rng = np.random.default_rng(37)
    batch = [rand_field(g, rng) for _ in range(3)]
    sp1 = build_pipeline(poisson_2d(), DesignPoint(V=4, p=2))
    sp3 = build_pipeline(poisson_2d(), DesignPoint(V=4, p=2, batch=3))
    solo = [simulate(sp1, fd, 2).cycles for fd in batch]
    res = simulate_batched(sp3, batch, 2)
    fill_slots = -(-24 // 4) * 2  # p*D/2 = 2 rows of fill per pass
    assert sum(solo) - res.cycles == 2 * fill_slots
    # solo runs and the batch agree bitwise despite the shared stream
    for fd, out in zip(batch, res.outputs):
        np.testing.assert_array_equal(out.grid(), simulate(sp1, fd, 2).output.grid())


def test_batch_argument_validation():
    g = MeshGeometry((24, 18))
    rng = np.random.default_rng(38)
    sp = build_pipeline(poisson_2d(), DesignPoint(V=4, p=1))
    with pytest.raises(ValueError, match="must not be empty"):
        simulate_batched(sp, [], 1)
    mixed = [rand_field(g, rng), rand_field(MeshGeometry((24, 20)), rng)]
    with pytest.raises(ValueError, match="mixes mesh geometries"):
        simulate_batched(sp, mixed, 1)


# --- capacity policing ------------------------------------------------------------


def test_capacity_error_names_the_bound():
    g = MeshGeometry((100, 20))
    fd = rand_field(g, np.random.default_rng(39))
    tight = ResourceProfile("tight", 8490, 2000, 19.2e9, num_ports=2)
    sp = build_pipeline(poisson_2d(), DesignPoint(V=1, p=4), profile=tight)
    with pytest.raises(CapacityError, match="p_mem=2"):
        simulate(sp, fd, 4)
    # the same design without a bound profile is a legal what-if run
    free = build_pipeline(poisson_2d(), DesignPoint(V=1, p=4))
    assert simulate(free, fd, 4).cycles == cycles_2d(100, 20, 1, 4, 2, 4)


def test_capacity_error_honours_tile_cross_section():
    g = MeshGeometry((100, 20))
    fd = rand_field(g, np.random.default_rng(40))
    tight = ResourceProfile("tight", 8490, 2000, 19.2e9, num_ports=2)
    d = DesignPoint(V=4, p=4, tile=(32,))
    sp = build_pipeline(poisson_2d(), d, profile=tight)
    # 32-cell lines fit where 100-cell lines did not
    res = simulate_tiled(sp, fd, 4)
    assert res.tiles_per_pass == 5


def test_plane_budget_warning():
    kernel = star5_2d()
    pipe = PipelineSpec(
        name="narrow",
        field="u",
        stages=(Stage(kernel=kernel, input="u", rule=Replace(out="u")),),
        dsp_cost=kernel.dsp_cost,
        plane_cells_limit=16,
    )
    g = MeshGeometry((32, 8))
    fd = rand_field(g, np.random.default_rng(41))
    sp = build_pipeline(pipe, DesignPoint(V=4, p=1))
    with pytest.warns(RuntimeWarning, match="plane budget"):
        simulate(sp, fd, 1)


def test_depth_estimate_frozen():
    g = MeshGeometry((16, 12))
    fd = rand_field(g, np.random.default_rng(42))
    res = simulate(build_pipeline(poisson_2d(), DesignPoint(V=4, p=2)), fd, 2)
    # two chained 5-tap stages: 8 * (1 + ceil(log2 5)) each
    assert res.depth_cycles_estimate == 64
    rtm_res = simulate(
        build_pipeline(_rtm(), DesignPoint(V=4, p=1)),
        rtm_fields((12, 10, 10), np.random.default_rng(43)),
        1,
    )
    assert rtm_res.depth_cycles_estimate == 4 * (8 * 6 + 8 + 8)
