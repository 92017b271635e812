"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from stencilpipe import (
    FieldData,
    MeshGeometry,
    ResourceProfile,
    StencilKernel,
    Tap,
    single_stage,
)


def rand_field(geo: MeshGeometry, rng, lo=0.05, hi=1.0) -> FieldData:
    values = rng.uniform(lo, hi, size=geo.cells * geo.arity).astype(np.float32)
    return FieldData(geo, values)


def rtm_fields(dims, rng) -> dict:
    geo = MeshGeometry(dims, arity=6)
    scalar = MeshGeometry(dims)
    return {
        "y": rand_field(geo, rng),
        "rho": rand_field(scalar, rng, 0.5, 2.0),
        "mu": rand_field(scalar, rng, 0.5, 2.0),
    }


def hbm_profile(mem_bytes=14_155_776) -> ResourceProfile:
    # 16 pseudo channels at HBM per-channel bandwidth; memory sized so the
    # optimal square tile width for p=3, D=2, k=4 lands exactly on 768
    return ResourceProfile(
        name="u280-hbm16",
        dsp_total=8490,
        onchip_mem_bytes=mem_bytes,
        channel_bw_bytes_per_s=14.375e9,
        num_ports=16,
        freq_hz=300e6,
        mem_util_cap=1.0,
    )


def star5_2d(c=0.5, s=0.125) -> StencilKernel:
    return StencilKernel(
        name="star5",
        taps=(
            Tap((-1, 0), s),
            Tap((1, 0), s),
            Tap((0, -1), s),
            Tap((0, 1), s),
            Tap((0, 0), c),
        ),
        dsp_cost=14,
    )


def star7_3d(weights=None) -> StencilKernel:
    w = weights if weights is not None else [0.125, 0.125, 0.125, 0.25, 0.125, 0.125, 0.125]
    return StencilKernel(
        name="star7",
        taps=(
            Tap((1, 0, 0), w[0]),
            Tap((-1, 0, 0), w[1]),
            Tap((0, -1, 0), w[2]),
            Tap((0, 0, 0), w[3]),
            Tap((0, 1, 0), w[4]),
            Tap((0, 0, 1), w[5]),
            Tap((0, 0, -1), w[6]),
        ),
        dsp_cost=33,
    )


def pipe_for(ndim: int, order: int = 2):
    """A single-stage pipeline of the given dimensionality and order, for
    cycle-count tests where the arithmetic does not matter."""
    r = order // 2
    if ndim == 2:
        taps = (Tap((-r, 0), 0.25), Tap((r, 0), 0.25), Tap((0, -r), 0.25),
                Tap((0, r), 0.25), Tap((0, 0), 0.0))
    else:
        taps = (Tap((-r, 0, 0), 0.2), Tap((r, 0, 0), 0.2), Tap((0, -r, 0), 0.2),
                Tap((0, r, 0), 0.2), Tap((0, 0, -r), 0.1), Tap((0, 0, r), 0.1),
                Tap((0, 0, 0), 0.0))
    return single_stage(StencilKernel(name=f"probe{ndim}d", taps=taps, dsp_cost=4))
