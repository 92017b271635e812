"""stencilpipe: design-space models and a deterministic dataflow
simulator for streaming stencil accelerators on structured meshes.

The package splits into the analytic side (core, model, explore), the
execution side (simulator and its naive oracle in reference), bundled
example pipelines (apps), and plumbing (meshfile, cli).
"""

from .core import (
    CarryCombine,
    CarryStep,
    DesignPoint,
    FeasibilityReport,
    FieldData,
    MeshGeometry,
    PipelineSpec,
    Replace,
    ResourceProfile,
    Stage,
    StencilKernel,
    Tap,
    U280,
    estimate_dsp_cost,
    single_stage,
    validate_design,
)
from .model import Limits, ModelReport, predict
from .reference import run_reference, run_reference_batch
from .simulator import (
    BatchResult,
    CapacityError,
    SimPipeline,
    SimResult,
    WindowBuffer,
    build_pipeline,
    simulate,
    simulate_batched,
    simulate_tiled,
)
from .apps import jacobi_3d, poisson_2d, rtm_forward
from .explore import SweepConstraints, ExploreResult, best_design, enumerate_designs
from .meshfile import load_field, save_field

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "CapacityError",
    "CarryCombine",
    "CarryStep",
    "DesignPoint",
    "ExploreResult",
    "FeasibilityReport",
    "FieldData",
    "Limits",
    "MeshGeometry",
    "ModelReport",
    "PipelineSpec",
    "Replace",
    "ResourceProfile",
    "SimPipeline",
    "SimResult",
    "Stage",
    "StencilKernel",
    "SweepConstraints",
    "Tap",
    "U280",
    "WindowBuffer",
    "best_design",
    "build_pipeline",
    "enumerate_designs",
    "estimate_dsp_cost",
    "jacobi_3d",
    "load_field",
    "poisson_2d",
    "predict",
    "rtm_forward",
    "run_reference",
    "run_reference_batch",
    "save_field",
    "simulate",
    "simulate_batched",
    "simulate_tiled",
    "single_stage",
    "validate_design",
    "__version__",
]
