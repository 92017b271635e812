"""Naive full-mesh executor, the numerical oracle for the simulator.

Every stage is evaluated over the whole mesh at once, double buffered
between iterations.  A point is updated when it lies at least the stage's
radius away from every mesh boundary; all other points pass through
unchanged.  Taps are accumulated strictly in declaration order in single
precision, the same order the simulator uses, so outputs are comparable
bit for bit.

Clarity is preferred over speed here on purpose.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .core import (
    CarryCombine,
    CarryStep,
    FieldData,
    FieldSet,
    Replace,
    Stage,
    StencilKernel,
    Work,
    as_pipeline,
    check_field_set,
)

__all__ = ["run_reference", "run_reference_batch"]


def _axis_for_offset_pos(ndim: int, pos: int) -> int:
    # offset component i addresses mesh dim i (x, y, z); grids are stored
    # reversed (z, y, x), arity innermost.
    return ndim - 1 - pos


def _interior(shape_rev: tuple[int, ...], r: int) -> tuple[slice, ...]:
    return tuple(slice(r, s - r) for s in shape_rev)


def _shifted(shape_rev: tuple[int, ...], offset: tuple[int, ...], r: int):
    ndim = len(offset)
    sl = [slice(None)] * ndim
    for pos, off in enumerate(offset):
        axis = _axis_for_offset_pos(ndim, pos)
        s = shape_rev[axis]
        sl[axis] = slice(r + off, s - r + off)
    return tuple(sl)


def _stencil_interior(
    kernel: StencilKernel,
    grid: np.ndarray,
    pointwise: Mapping[str, np.ndarray],
) -> np.ndarray:
    """Tap sum over the interior box, radius = kernel.radius on every axis.

    ``grid`` is (… mesh dims reversed …, arity); pointwise grids carry no
    arity axis and broadcast across components.
    """
    r = kernel.radius
    mesh_shape = grid.shape[:-1]
    centre = _interior(mesh_shape, r)
    acc = None
    for tap in kernel.taps:
        sl = grid[_shifted(mesh_shape, tap.offset, r) + (slice(None),)]
        if isinstance(tap.coeff, str):
            contrib = pointwise[tap.coeff][centre][..., np.newaxis] * sl
        else:
            contrib = np.float32(tap.coeff) * sl
        acc = contrib if acc is None else acc + contrib
    if kernel.scale_terms:
        factor = None
        for name, w in kernel.scale_terms:
            term = np.float32(w) * pointwise[name][centre]
            factor = term if factor is None else factor + term
        acc = acc * factor[..., np.newaxis]
    if kernel.post_scale is not None:
        acc = acc * np.float32(kernel.post_scale)
    return acc


def _apply_stage(stage: Stage, state: dict[str, np.ndarray]) -> None:
    kernel = stage.kernel
    r = kernel.radius
    grid = state[stage.input]
    mesh_shape = grid.shape[:-1]
    if min(mesh_shape) <= 2 * r:
        result = None  # interior is empty, everything passes through
    else:
        result = _stencil_interior(kernel, grid, state)
    rule = stage.rule
    box = _interior(mesh_shape, r) + (slice(None),)

    if isinstance(rule, Replace):
        out = state[rule.out].copy()
        if result is not None:
            out[box] = result
        state[rule.out] = out
    elif isinstance(rule, CarryStep):
        base = state[rule.base]
        carry = np.zeros_like(base)
        trial = base.copy()
        if result is not None:
            carry[box] = result
            trial[box] = base[box] + result / np.float32(rule.divisor)
        state[rule.carry] = carry
        state[rule.out] = trial
    elif isinstance(rule, CarryCombine):
        base = state[rule.base]
        out = base.copy()
        if result is not None:
            acc = base[box]
            for name, div in rule.terms:
                term = result if name is None else state[name][box]
                acc = acc + term / np.float32(div)
            out[box] = acc
        state[rule.out] = out
    else:
        raise TypeError(f"unknown update rule {type(rule).__name__}")


def run_reference(work: Work, fields: FieldSet, n_iter: int) -> FieldData:
    """Advance the primary field n_iter iterations and return it.

    ``fields`` is the primary FieldData alone, or a mapping holding the
    primary plus every pointwise coefficient field the pipeline reads.
    """
    if n_iter < 0:
        raise ValueError("n_iter must be >= 0")
    pipe = as_pipeline(work)
    fields = check_field_set(pipe, fields)
    geo = fields[pipe.field].geometry
    if n_iter == 0:
        return fields[pipe.field]

    state: dict[str, np.ndarray] = {pipe.field: fields[pipe.field].grid().copy()}
    for name in pipe.pointwise_fields:
        # coefficient planes are scalars per cell; drop the arity axis
        state[name] = fields[name].grid()[..., 0].copy()
    keep = {pipe.field, *pipe.pointwise_fields}
    for _ in range(n_iter):
        for stage in pipe.stages:
            _apply_stage(stage, state)
        for name in list(state):
            if name not in keep:
                del state[name]
    return FieldData.from_grid(geo, state[pipe.field])


def run_reference_batch(
    work: Work, batch: Sequence[FieldSet], n_iter: int
) -> list[FieldData]:
    """Map run_reference over a batch of same-shaped meshes."""
    if not batch:
        raise ValueError("batch must not be empty")
    pipe = as_pipeline(work)
    geos = []
    for fields in batch:
        fd = fields if isinstance(fields, FieldData) else fields[pipe.field]
        geos.append(fd.geometry)
    if any(g != geos[0] for g in geos):
        raise ValueError("batch mixes mesh geometries")
    return [run_reference(pipe, fields, n_iter) for fields in batch]
