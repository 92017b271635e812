"""Behavioural tests for the full-mesh executor.

The cross-checks here re-derive each update with np.roll over whole
arrays, a deliberately different mechanism from the executor's interior
slicing.  Accumulation order follows tap declaration order in both, so
agreement is expected bit for bit.
"""

import numpy as np
import pytest

from stencilpipe import (
    FieldData,
    MeshGeometry,
    run_reference,
    run_reference_batch,
)
from stencilpipe.apps import RTM_STAR_OFFSETS, jacobi_3d, poisson_2d, rtm_forward

from helpers import rand_field, rtm_fields

JACOBI_K = (0.11, 0.07, 0.13, 0.31, 0.05, 0.17, 0.16)


def _grid(fd: FieldData) -> np.ndarray:
    return fd.grid()[..., 0]


# --- hand-checked impulse response -------------------------------------------


def test_poisson_impulse_by_hand():
    geo = MeshGeometry((5, 5))
    grid = np.zeros((5, 5, 1), np.float32)
    grid[2, 2, 0] = 1.0
    out = _grid(run_reference(poisson_2d(), FieldData.from_grid(geo, grid), 1))
    expected = np.zeros((5, 5), np.float32)
    expected[2, 2] = 0.5
    expected[1, 2] = expected[3, 2] = expected[2, 1] = expected[2, 3] = 0.125
    np.testing.assert_array_equal(out, expected)


def test_poisson_boundary_passes_through():
    geo = MeshGeometry((6, 4))
    rng = np.random.default_rng(3)
    fd = rand_field(geo, rng)
    before = _grid(fd)
    after = _grid(run_reference(poisson_2d(), fd, 3))
    np.testing.assert_array_equal(after[0, :], before[0, :])
    np.testing.assert_array_equal(after[-1, :], before[-1, :])
    np.testing.assert_array_equal(after[:, 0], before[:, 0])
    np.testing.assert_array_equal(after[:, -1], before[:, -1])
    assert not np.array_equal(after[1:-1, 1:-1], before[1:-1, 1:-1])


# --- roll-based re-implementations --------------------------------------------


def _poisson_roll(u: np.ndarray, n_iter: int) -> np.ndarray:
    s, c = np.float32(0.125), np.float32(0.5)
    for _ in range(n_iter):
        acc = s * np.roll(u, 1, axis=1)
        acc = acc + s * np.roll(u, -1, axis=1)
        acc = acc + s * np.roll(u, 1, axis=0)
        acc = acc + s * np.roll(u, -1, axis=0)
        acc = acc + c * u
        acc[0, :] = u[0, :]
        acc[-1, :] = u[-1, :]
        acc[:, 0] = u[:, 0]
        acc[:, -1] = u[:, -1]
        u = acc
    return u


def _jacobi_roll(u: np.ndarray, k, n_iter: int) -> np.ndarray:
    # grid axes are (z, y, x); tap offsets name (x, y, z)
    k = [np.float32(v) for v in k]
    for _ in range(n_iter):
        acc = k[0] * np.roll(u, -1, axis=2)
        acc = acc + k[1] * np.roll(u, 1, axis=2)
        acc = acc + k[2] * np.roll(u, 1, axis=1)
        acc = acc + k[3] * u
        acc = acc + k[4] * np.roll(u, -1, axis=1)
        acc = acc + k[5] * np.roll(u, -1, axis=0)
        acc = acc + k[6] * np.roll(u, 1, axis=0)
        for ax in range(3):
            lo = tuple(0 if a == ax else slice(None) for a in range(3))
            hi = tuple(-1 if a == ax else slice(None) for a in range(3))
            acc[lo] = u[lo]
            acc[hi] = u[hi]
        u = acc
    return u


@pytest.mark.parametrize("n_iter", [1, 4])
def test_poisson_matches_roll_oracle(n_iter):
    geo = MeshGeometry((17, 11))
    rng = np.random.default_rng(11)
    fd = rand_field(geo, rng)
    got = _grid(run_reference(poisson_2d(), fd, n_iter))
    np.testing.assert_array_equal(got, _poisson_roll(_grid(fd), n_iter))


@pytest.mark.parametrize("n_iter", [1, 4])
def test_jacobi_matches_roll_oracle(n_iter):
    geo = MeshGeometry((10, 8, 6))
    rng = np.random.default_rng(12)
    fd = rand_field(geo, rng)
    got = _grid(run_reference(jacobi_3d(*JACOBI_K), fd, n_iter))
    np.testing.assert_array_equal(got, _jacobi_roll(_grid(fd), JACOBI_K, n_iter))


# --- RK4 wave update, written out longhand ------------------------------------


def _rtm_roll(y, rho, mu, coeffs, dt, rho_w, mu_w, n_iter):
    box = (slice(4, -4),) * 3 + (slice(None),)
    factor = (np.float32(rho_w) * rho + np.float32(mu_w) * mu)[..., np.newaxis]

    def f(u):
        acc = None
        for off, cf in zip(RTM_STAR_OFFSETS, coeffs):
            sh = np.roll(u, (-off[2], -off[1], -off[0]), axis=(0, 1, 2))
            term = np.float32(cf) * sh
            acc = term if acc is None else acc + term
        return acc * factor * np.float32(dt)

    for _ in range(n_iter):
        k1 = f(y)
        t = y.copy()
        t[box] = y[box] + k1[box] / np.float32(2)
        k2 = f(t)
        t = y.copy()
        t[box] = y[box] + k2[box] / np.float32(2)
        k3 = f(t)
        t = y.copy()
        t[box] = y[box] + k3[box] / np.float32(1)
        k4 = f(t)
        out = y.copy()
        acc = y[box]
        acc = acc + k1[box] / np.float32(6.0)
        acc = acc + k2[box] / np.float32(3.0)
        acc = acc + k3[box] / np.float32(3.0)
        acc = acc + k4[box] / np.float32(6.0)
        out[box] = acc
        y = out
    return y


@pytest.mark.parametrize("n_iter", [1, 3])
def test_rtm_matches_longhand_rk4(n_iter):
    coeffs = [-2.847] + [(-1.0) ** i * (0.02 + 0.003 * i) for i in range(24)]
    dt, rho_w, mu_w = 0.001953125, 0.6, 0.4
    pipe = rtm_forward(coeffs, dt, rho_w, mu_w)
    rng = np.random.default_rng(13)
    fields = rtm_fields((12, 10, 12), rng)
    got = run_reference(pipe, fields, n_iter).grid()
    want = _rtm_roll(
        fields["y"].grid().copy(),
        _grid(fields["rho"]),
        _grid(fields["mu"]),
        coeffs, dt, rho_w, mu_w, n_iter,
    )
    np.testing.assert_array_equal(got, want)


def test_rtm_boundary_ring_is_untouched():
    coeffs = [1.0] * 25
    pipe = rtm_forward(coeffs, dt=0.25)
    rng = np.random.default_rng(14)
    fields = rtm_fields((12, 12, 12), rng)
    before = fields["y"].grid()
    after = run_reference(pipe, fields, 1).grid()
    ring = np.ones(before.shape[:3], bool)
    ring[4:-4, 4:-4, 4:-4] = False
    np.testing.assert_array_equal(after[ring], before[ring])
    assert not np.array_equal(after[~ring], before[~ring])


# --- algebraic behaviour -------------------------------------------------------


def test_linear_pipelines_scale():
    rng = np.random.default_rng(15)
    geo = MeshGeometry((14, 9))
    fd = rand_field(geo, rng)
    scaled = FieldData.from_grid(geo, np.float32(3.7) * fd.grid())
    a = _grid(run_reference(poisson_2d(), scaled, 3))
    b = np.float32(3.7) * _grid(run_reference(poisson_2d(), fd, 3))
    np.testing.assert_allclose(a, b, rtol=1e-5)


def test_translation_equivariance():
    geo = MeshGeometry((16, 16))
    rng = np.random.default_rng(16)
    base = np.zeros((16, 16, 1), np.float32)
    base[5:9, 5:9, 0] = rng.uniform(0.1, 1.0, (4, 4)).astype(np.float32)
    out_a = _grid(run_reference(poisson_2d(), FieldData.from_grid(geo, base), 2))
    shifted = np.roll(base, 1, axis=1)
    out_b = _grid(run_reference(poisson_2d(), FieldData.from_grid(geo, shifted), 2))
    # the disturbance never reaches an edge, so the response shifts rigidly
    np.testing.assert_array_equal(np.roll(out_a, 1, axis=1), out_b)


def test_constant_field_is_fixed_point():
    geo = MeshGeometry((9, 9))
    ones = FieldData.from_grid(geo, np.ones((9, 9, 1), np.float32))
    out = run_reference(poisson_2d(), ones, 5)
    np.testing.assert_array_equal(out.grid(), ones.grid())


def test_zero_iterations_is_identity():
    geo = MeshGeometry((8, 8))
    rng = np.random.default_rng(17)
    fd = rand_field(geo, rng)
    assert run_reference(poisson_2d(), fd, 0) is fd
    with pytest.raises(ValueError):
        run_reference(poisson_2d(), fd, -1)


# --- batch -------------------------------------------------------------------


def test_batch_is_elementwise_map():
    geo = MeshGeometry((12, 7))
    rng = np.random.default_rng(18)
    batch = [rand_field(geo, rng) for _ in range(3)]
    outs = run_reference_batch(poisson_2d(), batch, 2)
    for fd, out in zip(batch, outs):
        np.testing.assert_array_equal(
            out.grid(), run_reference(poisson_2d(), fd, 2).grid()
        )


def test_batch_rejects_mixed_geometry():
    rng = np.random.default_rng(19)
    a = rand_field(MeshGeometry((12, 7)), rng)
    b = rand_field(MeshGeometry((12, 8)), rng)
    with pytest.raises(ValueError):
        run_reference_batch(poisson_2d(), [a, b], 1)
    with pytest.raises(ValueError):
        run_reference_batch(poisson_2d(), [], 1)
