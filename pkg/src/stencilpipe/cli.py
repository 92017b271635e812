"""Command-line front end.

Four subcommands share one JSON config format with sections ``mesh``,
``app`` (or ``kernel``), ``device``, ``design`` and ``run``:

  model     evaluate the analytic model, emit <prefix>.report.json
  simulate  run the dataflow simulator, emit report + output field(s)
  verify    simulator vs reference bitwise + cycle-formula check
  explore   sweep the design space, emit <prefix>.csv

Unknown config keys are hard errors (exit 2), as are missing required
ones.  verify exits 1 when any equivalence check fails.  Reports round
reals to 9 significant digits, which is lossless for binary32 payload
values; integers are written exactly.

The STENCILPIPE_DEVICE environment variable, when set, names a JSON
device profile file that overrides the config's device section.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import model
from .apps import jacobi_3d, poisson_2d, rtm_forward
from .core import (
    DesignPoint,
    FieldData,
    MeshGeometry,
    PipelineSpec,
    ResourceProfile,
    StencilKernel,
    Tap,
    U280,
    single_stage,
)
from .explore import SweepConstraints, enumerate_designs
from .meshfile import load_field, save_field
from .reference import run_reference, run_reference_batch
from .simulator import build_pipeline, simulate, simulate_batched, simulate_tiled

__all__ = ["main", "ConfigError"]

DEVICE_ENV = "STENCILPIPE_DEVICE"

BUILTIN_DEVICES = {U280.name: U280}

CSV_COLUMNS = [
    "V",
    "p",
    "tile",
    "batch",
    "freq_mhz",
    "mode",
    "cycles",
    "throughput_cells_per_cycle",
    "runtime_s",
    "bandwidth_bytes_per_s",
    "valid_ratio",
    "v_max",
    "p_dsp",
    "p_mem",
    "p_max",
    "m_opt",
]


class ConfigError(Exception):
    """Bad or missing configuration; mapped to exit code 2."""


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _need(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key '{key}' in {where}")
    return section[key]


def load_config(path: str | Path) -> dict:
    try:
        raw = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    _check_keys(cfg, {"mesh", "app", "kernel", "device", "design", "run"}, "config")
    return cfg


# ---------------------------------------------------------------------------
# Section builders
# ---------------------------------------------------------------------------


def _build_work(cfg: dict) -> PipelineSpec:
    if ("app" in cfg) == ("kernel" in cfg):
        raise ConfigError("config needs exactly one of 'app' or 'kernel'")
    if "kernel" in cfg:
        sec = cfg["kernel"]
        _check_keys(sec, {"name", "taps", "dsp_cost", "arity"}, "kernel")
        taps = []
        for i, t in enumerate(_need(sec, "taps", "kernel")):
            if not isinstance(t, dict):
                raise ConfigError("kernel.taps entries must be objects")
            _check_keys(t, {"offset", "coeff"}, f"kernel.taps[{i}]")
            taps.append(Tap(tuple(_need(t, "offset", "tap")), _need(t, "coeff", "tap")))
        try:
            kernel = StencilKernel(
                name=str(sec.get("name", "custom")),
                taps=tuple(taps),
                dsp_cost=int(_need(sec, "dsp_cost", "kernel")),
                arity=int(sec.get("arity", 1)),
            )
        except ValueError as e:
            raise ConfigError(f"bad kernel: {e}") from None
        return single_stage(kernel)

    sec = cfg["app"]
    name = _need(sec, "name", "app")
    try:
        if name == "poisson":
            _check_keys(sec, {"name"}, "app")
            return poisson_2d()
        if name == "jacobi":
            _check_keys(sec, {"name", "coefficients"}, "app")
            ks = _need(sec, "coefficients", "app")
            if len(ks) != 7:
                raise ConfigError("jacobi needs exactly 7 coefficients")
            return jacobi_3d(*[float(k) for k in ks])
        if name == "rtm":
            _check_keys(
                sec, {"name", "star_coeffs", "dt", "rho_weight", "mu_weight"}, "app"
            )
            return rtm_forward(
                _need(sec, "star_coeffs", "app"),
                dt=float(_need(sec, "dt", "app")),
                rho_weight=float(sec.get("rho_weight", 1.0)),
                mu_weight=float(sec.get("mu_weight", 1.0)),
            )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad app section: {e}") from None
    raise ConfigError(f"unknown app '{name}' (expected poisson, jacobi or rtm)")


def _profile_from_dict(sec: dict, where: str) -> ResourceProfile:
    _check_keys(
        sec,
        {
            "name",
            "dsp_total",
            "onchip_mem_bytes",
            "channel_bw_bytes_per_s",
            "num_ports",
            "freq_mhz",
            "dsp_util_cap",
            "mem_util_cap",
        },
        where,
    )
    try:
        return ResourceProfile(
            name=str(sec.get("name", "custom")),
            dsp_total=int(_need(sec, "dsp_total", where)),
            onchip_mem_bytes=int(_need(sec, "onchip_mem_bytes", where)),
            channel_bw_bytes_per_s=float(_need(sec, "channel_bw_bytes_per_s", where)),
            num_ports=int(sec.get("num_ports", 1)),
            freq_hz=float(sec.get("freq_mhz", 300.0)) * 1e6,
            dsp_util_cap=float(sec.get("dsp_util_cap", 0.9)),
            mem_util_cap=float(sec.get("mem_util_cap", 0.85)),
        )
    except ValueError as e:
        raise ConfigError(f"bad device profile: {e}") from None


def _profile_from_file(path: str) -> ResourceProfile:
    try:
        sec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot load device profile {path}: {e}") from None
    if not isinstance(sec, dict):
        raise ConfigError(f"device profile {path} must be a JSON object")
    return _profile_from_dict(sec, f"device file {path}")


def _build_device(cfg: dict) -> ResourceProfile:
    env = os.environ.get(DEVICE_ENV)
    if env:
        return _profile_from_file(env)
    sec = cfg.get("device")
    if sec is None:
        return U280
    if not isinstance(sec, dict):
        raise ConfigError("device section must be an object")
    if "profile" in sec:
        _check_keys(sec, {"profile"}, "device")
        name = sec["profile"]
        if name not in BUILTIN_DEVICES:
            known = ", ".join(sorted(BUILTIN_DEVICES))
            raise ConfigError(f"unknown device profile '{name}' (built in: {known})")
        return BUILTIN_DEVICES[name]
    if "path" in sec:
        _check_keys(sec, {"path"}, "device")
        return _profile_from_file(sec["path"])
    return _profile_from_dict(sec, "device")


def _build_mesh(cfg: dict, pipe: PipelineSpec) -> MeshGeometry:
    sec = _need(cfg, "mesh", "config")
    _check_keys(sec, {"dims"}, "mesh")
    dims = _need(sec, "dims", "mesh")
    if not isinstance(dims, list) or not all(isinstance(d, int) for d in dims):
        raise ConfigError("mesh.dims must be a list of integers")
    try:
        geo = MeshGeometry(tuple(dims), arity=pipe.arity)
    except ValueError as e:
        raise ConfigError(f"bad mesh: {e}") from None
    if geo.ndim != pipe.ndim:
        raise ConfigError(
            f"mesh is {geo.ndim}D but the configured pipeline is {pipe.ndim}D"
        )
    return geo


def _as_tile(value, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(isinstance(t, int) for t in value):
        raise ConfigError(f"{where} must be a list of integers")
    return tuple(value)


def _build_design(cfg: dict) -> DesignPoint:
    sec = _need(cfg, "design", "config")
    _check_keys(sec, {"V", "p", "tile", "batch", "freq_mhz"}, "design")
    tile = sec.get("tile")
    try:
        return DesignPoint(
            V=int(_need(sec, "V", "design")),
            p=int(_need(sec, "p", "design")),
            tile=None if tile is None else _as_tile(tile, "design.tile"),
            batch=int(sec.get("batch", 1)),
            freq_hz=None
            if sec.get("freq_mhz") is None
            else float(sec["freq_mhz"]) * 1e6,
        )
    except ValueError as e:
        raise ConfigError(f"bad design: {e}") from None


def _build_run(cfg: dict) -> dict:
    sec = cfg.get("run", {})
    _check_keys(sec, {"mode", "n_iter"}, "run")
    mode = sec.get("mode", "auto")
    if mode not in ("auto", "baseline", "tiled", "batched"):
        raise ConfigError(f"bad run.mode '{mode}'")
    n_iter = _need(sec, "n_iter", "run")
    if not isinstance(n_iter, int) or n_iter < 0:
        raise ConfigError("run.n_iter must be a non-negative integer")
    return {"mode": mode, "n_iter": n_iter}


def _resolve_mode(mode: str, d: DesignPoint) -> str:
    if mode == "auto":
        if d.tile is not None:
            return "tiled"
        if d.batch > 1:
            return "batched"
        return "baseline"
    if mode == "tiled" and d.tile is None:
        raise ConfigError("run.mode is 'tiled' but design.tile is not set")
    if mode == "batched" and d.batch < 2:
        raise ConfigError("run.mode is 'batched' but design.batch is < 2")
    if mode == "baseline" and (d.tile is not None or d.batch > 1):
        raise ConfigError("run.mode 'baseline' conflicts with design tile/batch")
    return mode


def _build_constraints(cfg: dict) -> SweepConstraints:
    """For explore: the design section pins sweep dimensions; every key
    accepts a single value or a list of values."""
    sec = cfg.get("design", {})
    _check_keys(sec, {"V", "p", "tile", "batch", "freq_mhz"}, "design")
    run = cfg.get("run", {})
    _check_keys(run, {"mode", "n_iter"}, "run")

    def many(value, cast):
        if isinstance(value, list):
            return tuple(cast(v) for v in value)
        return (cast(value),)

    kwargs = {}
    if "V" in sec:
        kwargs["V"] = many(sec["V"], int)
    if "p" in sec:
        kwargs["p"] = many(sec["p"], int)
    if "tile" in sec:
        tiles = sec["tile"]
        if tiles is None:
            kwargs["tiles"] = (None,)
        else:
            if tiles and not isinstance(tiles[0], (list, type(None))):
                tiles = [tiles]  # a single tile, not a list of tiles
            kwargs["tiles"] = tuple(
                None if t is None else _as_tile(t, "design.tile") for t in tiles
            )
    if "batch" in sec:
        kwargs["batches"] = many(sec["batch"], int)
    if "freq_mhz" in sec:
        kwargs["freqs"] = tuple(f * 1e6 for f in many(sec["freq_mhz"], float))
    if "n_iter" in run:
        kwargs["n_iter"] = run["n_iter"]
    try:
        return SweepConstraints(**kwargs)
    except ValueError as e:
        raise ConfigError(f"bad sweep constraints: {e}") from None


# ---------------------------------------------------------------------------
# Field generation and I/O
# ---------------------------------------------------------------------------


def _parse_inputs(items: list[str] | None) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = "", item
        if name in out:
            raise ConfigError(f"duplicate --input for '{name or '<primary>'}'")
        out[name] = path
    return out


def _make_fields(
    pipe: PipelineSpec,
    geo: MeshGeometry,
    inputs: dict[str, str],
    rng: np.random.Generator,
):
    """Primary plus pointwise fields, from files when given, else random
    uniform [0.05, 1) values (kept away from zero so relative error in
    downstream comparisons stays meaningful)."""
    fields: dict[str, FieldData] = {}
    scalar_geo = MeshGeometry(geo.dims, element_bytes=geo.element_bytes)
    for name in (pipe.field,) + pipe.pointwise_fields:
        g = geo if name == pipe.field else scalar_geo
        path = inputs.get(name)
        if path is None and name == pipe.field:
            path = inputs.get("")  # bare --input path means the primary field
        if path is not None:
            field = load_field(path)
            if field.geometry != g:
                raise ConfigError(
                    f"input field '{name}' has geometry {field.geometry.dims} "
                    f"arity {field.geometry.arity}, config wants {g.dims} "
                    f"arity {g.arity}"
                )
            fields[name] = field
        else:
            values = rng.uniform(0.05, 1.0, size=g.cells * g.arity)
            fields[name] = FieldData(g, values.astype(np.float32))
    unknown = set(inputs) - {""} - set(fields)
    if unknown:
        raise ConfigError(f"--input names not read by this pipeline: {sorted(unknown)}")
    if len(fields) == 1:
        return fields[pipe.field]
    return fields


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def round9(x: float) -> float:
    """Reals in reports: 9 significant decimal digits (binary32-exact)."""
    return float(f"{x:.9g}")


def _clean(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, (int, str)) or obj is None:
        return obj
    if isinstance(obj, float):
        return round9(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _design_dict(d: DesignPoint) -> dict:
    return {
        "V": d.V,
        "p": d.p,
        "tile": None if d.tile is None else list(d.tile),
        "batch": d.batch,
        "freq_mhz": None if d.freq_hz is None else d.freq_hz / 1e6,
    }


def _report_dict(rep: model.ModelReport) -> dict:
    lim = rep.limits
    return {
        "mode": rep.mode,
        "feasible": rep.feasible,
        "violations": list(rep.violations),
        "n_iter": rep.n_iter,
        "n_iter_effective": rep.n_iter_effective,
        "cycles": rep.cycles,
        "runtime_s": rep.runtime_s,
        "throughput_cells_per_cycle": rep.throughput_cells_per_cycle,
        "valid_ratio": rep.valid_ratio,
        "bytes_read": rep.bytes_read,
        "bytes_written": rep.bytes_written,
        "bandwidth_bytes_per_s": rep.bandwidth_bytes_per_s,
        "limits": {
            "v_max_raw": lim.v_max_raw,
            "v_max": lim.v_max,
            "p_dsp": lim.p_dsp,
            "p_mem": lim.p_mem,
            "p_max": lim.p_max,
            "m_opt": lim.m_opt,
        },
    }


def _write_report(prefix: Path, payload: dict) -> Path:
    path = prefix.with_name(prefix.name + ".report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2) + "\n")
    return path


def _prefix(args, cfg_path: str) -> Path:
    if args.output:
        return Path(args.output)
    return Path(Path(cfg_path).stem)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_model(args) -> int:
    cfg = load_config(args.config)
    pipe = _build_work(cfg)
    geo = _build_mesh(cfg, pipe)
    device = _build_device(cfg)
    d = _build_design(cfg)
    run = _build_run(cfg)
    _resolve_mode(run["mode"], d)  # reject mode/design contradictions up front
    rep = model.predict(d, pipe, geo, device, run["n_iter"])
    payload = {
        "command": "model",
        "device": device.name,
        "mesh": {"dims": list(geo.dims), "arity": geo.arity},
        "design": _design_dict(d),
        "model": _report_dict(rep),
    }
    path = _write_report(_prefix(args, args.config), payload)
    print(f"mode {rep.mode}: {rep.cycles} cycles, {rep.runtime_s * 1e3:.6g} ms, "
          f"{rep.throughput_cells_per_cycle:.6g} cells/cycle")
    if not rep.feasible:
        print("infeasible: " + "; ".join(rep.violations))
    print(f"report: {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    pipe = _build_work(cfg)
    geo = _build_mesh(cfg, pipe)
    device = _build_device(cfg)
    d = _build_design(cfg)
    run = _build_run(cfg)
    rng = np.random.default_rng(args.seed)
    inputs = _parse_inputs(args.input)
    mode = _resolve_mode(run["mode"], d)
    sp = build_pipeline(pipe, d, device)
    if mode == "batched":
        data = [_make_fields(pipe, geo, inputs, rng) for _ in range(d.batch)]
        sim = simulate_batched(sp, data, run["n_iter"])
    elif mode == "tiled":
        sim = simulate_tiled(sp, _make_fields(pipe, geo, inputs, rng), run["n_iter"])
    else:
        sim = simulate(sp, _make_fields(pipe, geo, inputs, rng), run["n_iter"])

    rep = model.predict(d, pipe, geo, device, run["n_iter"])
    prefix = _prefix(args, args.config)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    outputs = sim.outputs if mode == "batched" else (sim.output,)
    written = []
    for i, out in enumerate(outputs):
        if len(outputs) == 1:
            path = prefix.with_name(prefix.name + ".out.stnf")
        else:
            path = prefix.with_name(f"{prefix.name}.out{i:03d}.stnf")
        save_field(path, out)
        written.append(str(path))
    payload = {
        "command": "simulate",
        "device": device.name,
        "mesh": {"dims": list(geo.dims), "arity": geo.arity},
        "design": _design_dict(d),
        "simulator": {
            "mode": mode,
            "cycles": sim.cycles,
            "bytes_read": sim.bytes_read,
            "bytes_written": sim.bytes_written,
            "n_iter": sim.n_iter,
            "n_iter_effective": sim.n_iter_effective,
            "passes": sim.passes,
            "redundant_cells": getattr(sim, "redundant_cells", 0),
            "tiles_per_pass": getattr(sim, "tiles_per_pass", 1),
            "depth_cycles_estimate": sim.depth_cycles_estimate,
        },
        "model": _report_dict(rep),
        "delta": {
            "cycles": sim.cycles - rep.cycles,
            "bytes_read": sim.bytes_read - rep.bytes_read,
            "bytes_written": sim.bytes_written - rep.bytes_written,
        },
        "outputs": written,
    }
    path = _write_report(prefix, payload)
    print(f"mode {mode}: {sim.cycles} cycles "
          f"(model {rep.cycles}, delta {sim.cycles - rep.cycles})")
    print(f"report: {path}")
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    pipe = _build_work(cfg)
    geo = _build_mesh(cfg, pipe)
    device = _build_device(cfg)
    d = _build_design(cfg)
    run = _build_run(cfg)
    rng = np.random.default_rng(args.seed)
    inputs = _parse_inputs(args.input)
    mode = _resolve_mode(run["mode"], d)
    n_iter = run["n_iter"]
    checks: list[tuple[str, bool]] = []

    D = pipe.order
    if mode == "batched":
        data = [_make_fields(pipe, geo, inputs, rng) for _ in range(d.batch)]
        sim = simulate_batched(build_pipeline(pipe, d, device), data, n_iter)
        refs = run_reference_batch(pipe, data, sim.n_iter_effective)
        bitwise = all(
            np.array_equal(a.values, b.values) for a, b in zip(sim.outputs, refs)
        )
        if geo.ndim == 2:
            want = model.batched_cycles_2d(geo.m, geo.n, d.V, d.p, D, d.batch, n_iter)
        else:
            want = model.batched_cycles_3d(
                geo.m, geo.n, geo.l, d.V, d.p, D, d.batch, n_iter
            )
    else:
        data = _make_fields(pipe, geo, inputs, rng)
        sp = build_pipeline(pipe, d, device)
        if mode == "tiled":
            sim = simulate_tiled(sp, data, n_iter)
            want = model.tiled_cycles_total(geo, d.tile, d.V, d.p, D, n_iter)
        else:
            sim = simulate(sp, data, n_iter)
            if geo.ndim == 2:
                want = model.cycles_2d(geo.m, geo.n, d.V, d.p, D, n_iter)
            else:
                want = model.cycles_3d(geo.m, geo.n, geo.l, d.V, d.p, D, n_iter)
        ref = run_reference(pipe, data, sim.n_iter_effective)
        bitwise = np.array_equal(sim.output.values, ref.values)

    checks.append(("simulator output bitwise equal to reference", bitwise))
    checks.append((f"cycle count matches closed form ({sim.cycles})",
                   sim.cycles == want))
    ok = all(passed for _, passed in checks)
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    print(f"verify: {'all checks passed' if ok else 'CHECKS FAILED'} "
          f"({mode}, {n_iter} iterations)")
    return 0 if ok else 1


def cmd_explore(args) -> int:
    cfg = load_config(args.config)
    pipe = _build_work(cfg)
    geo = _build_mesh(cfg, pipe)
    device = _build_device(cfg)
    constraints = _build_constraints(cfg)
    result = enumerate_designs(device, pipe, geo, constraints, jobs=args.jobs)
    prefix = _prefix(args, args.config)
    path = prefix.with_name(prefix.name + ".csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for d, rep in result:
            lim = rep.limits
            writer.writerow([
                d.V,
                d.p,
                "" if d.tile is None else "x".join(str(t) for t in d.tile),
                d.batch,
                round9((d.freq_hz or device.freq_hz) / 1e6),
                rep.mode,
                rep.cycles,
                round9(rep.throughput_cells_per_cycle),
                round9(rep.runtime_s),
                round9(rep.bandwidth_bytes_per_s),
                round9(rep.valid_ratio),
                lim.v_max,
                lim.p_dsp,
                lim.p_mem,
                lim.p_max,
                round9(lim.m_opt),
            ])
    if result.entries:
        d, rep = result.entries[0]
        print(f"{len(result.entries)} feasible designs; best: V={d.V} p={d.p} "
              f"tile={d.tile} B={d.batch} "
              f"({rep.throughput_cells_per_cycle:.6g} cells/cycle)")
    else:
        print(f"no feasible designs; binding constraint: {result.binding}")
    print(f"table: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stencilpipe",
        description="Design-space models and a dataflow simulator for "
        "streaming stencil accelerators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("model", cmd_model),
        ("simulate", cmd_simulate),
        ("verify", cmd_verify),
        ("explore", cmd_explore),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output", help="output path prefix (default: config stem)")
        p.add_argument(
            "--input",
            action="append",
            help="input field file, 'name=path' or bare path for the "
            "primary field; repeatable",
        )
        p.add_argument("--seed", type=int, default=0,
                       help="RNG seed for generated input fields")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker threads for explore")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
