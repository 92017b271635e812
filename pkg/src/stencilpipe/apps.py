"""Ready-made pipelines: the three workloads the toolkit is tuned for.

Cost-group constants (DSP slices per point per lane) are synthesis
results treated as inputs here: 14 for the 2D Poisson step, 33 for the
3D Jacobi step, 2444 for the fused RK4 wave update.
"""

from __future__ import annotations

from typing import Sequence

from .core import (
    CarryCombine,
    CarryStep,
    PipelineSpec,
    Stage,
    StencilKernel,
    Tap,
    single_stage,
)

__all__ = ["poisson_2d", "jacobi_3d", "rtm_forward", "RTM_STAR_OFFSETS"]

POISSON_DSP = 14
JACOBI_DSP = 33
RTM_DSP = 2444

# fused update: four chained applications of the same 25-point star
_RTM_STAGES = 4

# tap order for rtm_forward star coefficients: centre first, then each
# axis x, y, z at offsets -4..-1, +1..+4
RTM_STAR_OFFSETS: tuple[tuple[int, int, int], ...] = ((0, 0, 0),) + tuple(
    (d if ax == 0 else 0, d if ax == 1 else 0, d if ax == 2 else 0)
    for ax in range(3)
    for d in (-4, -3, -2, -1, 1, 2, 3, 4)
)


def poisson_2d() -> PipelineSpec:
    """Second-order 2D Poisson smoothing step, 5-point star."""
    kernel = StencilKernel(
        name="poisson5",
        taps=(
            Tap((-1, 0), 0.125),
            Tap((1, 0), 0.125),
            Tap((0, -1), 0.125),
            Tap((0, 1), 0.125),
            Tap((0, 0), 0.5),
        ),
        dsp_cost=POISSON_DSP,
    )
    return single_stage(kernel)


def jacobi_3d(
    k1: float, k2: float, k3: float, k4: float, k5: float, k6: float, k7: float
) -> PipelineSpec:
    """3D 7-point Jacobi step with caller-chosen weights.

    Tap layout (declaration order, which is also accumulation order):
    k1 (+1,0,0), k2 (-1,0,0), k3 (0,-1,0), k4 centre, k5 (0,+1,0),
    k6 (0,0,+1), k7 (0,0,-1).  With k4=1 and the rest zero the step is
    the identity.
    """
    kernel = StencilKernel(
        name="jacobi7",
        taps=(
            Tap((1, 0, 0), k1),
            Tap((-1, 0, 0), k2),
            Tap((0, -1, 0), k3),
            Tap((0, 0, 0), k4),
            Tap((0, 1, 0), k5),
            Tap((0, 0, 1), k6),
            Tap((0, 0, -1), k7),
        ),
        dsp_cost=JACOBI_DSP,
    )
    return single_stage(kernel)


def rtm_forward(
    star_coeffs: Sequence[float],
    dt: float,
    rho_weight: float = 1.0,
    mu_weight: float = 1.0,
    dsp_cost: int = RTM_DSP,
) -> PipelineSpec:
    """Fused RK4 update for a wave propagation sweep.

    One time step applies a 25-point eighth-order axis star f to a
    6-component state field y, modulated per cell by the material planes
    rho and mu, four times:

        k1 = f(y)            t = y + k1/2
        k2 = f(t)            t = y + k2/2
        k3 = f(t)            t = y + k3
        k4 = f(t)            y = y + k1/6 + k2/3 + k3/3 + k4/6

    where f(u) = (star @ u) * (rho_weight*rho + mu_weight*mu) * dt.  The
    intermediates t, k1, k2, k3 stream from stage to stage and never
    touch external memory: a pass reads y, rho, mu once and writes y
    once.  ``star_coeffs`` gives the 25 tap weights in RTM_STAR_OFFSETS
    order.  The physical stencil behind f is not public; this stand-in
    keeps its structure (order 8, arity 6, two material planes, the
    measured cost group) while leaving the weights to the caller.

    Meshes narrower than the stencil order (8) in x or y are rejected;
    cross-sections above 64x64 cells only draw a warning, since the
    software pipeline has no hard plane limit.
    """
    coeffs = tuple(float(c) for c in star_coeffs)
    if len(coeffs) != len(RTM_STAR_OFFSETS):
        raise ValueError(
            f"expected {len(RTM_STAR_OFFSETS)} star coefficients, got {len(coeffs)}"
        )
    per_stage = dsp_cost // _RTM_STAGES
    kernel = StencilKernel(
        name="rtm-star25",
        taps=tuple(Tap(o, c) for o, c in zip(RTM_STAR_OFFSETS, coeffs)),
        dsp_cost=per_stage,
        arity=6,
        scale_terms=(("rho", rho_weight), ("mu", mu_weight)),
        post_scale=dt,
    )
    stages = (
        Stage(kernel, "y", CarryStep(out="t", base="y", carry="k1", divisor=2)),
        Stage(kernel, "t", CarryStep(out="t", base="y", carry="k2", divisor=2)),
        Stage(kernel, "t", CarryStep(out="t", base="y", carry="k3", divisor=1)),
        Stage(
            kernel,
            "t",
            CarryCombine(
                out="y",
                base="y",
                terms=(("k1", 6.0), ("k2", 3.0), ("k3", 3.0), (None, 6.0)),
            ),
        ),
    )
    return PipelineSpec(
        name="rtm-forward",
        field="y",
        stages=stages,
        dsp_cost=dsp_cost,
        min_plane_extent=8,
        plane_cells_limit=64 * 64,
    )
