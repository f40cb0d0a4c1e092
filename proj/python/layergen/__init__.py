"""Layer-generality experiments on a parametrised Poisson problem family.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its public names.  Orchestrated experiments (run directories,
manifests, CSV exports) are driven by the ``layergen`` command-line tool.
"""

from ._core import (  # noqa: F401
    AdamParams,
    ActivationMatrix,
    BatchDerivatives,
    BVPSpec,
    CCAResult,
    ConfigError,
    LossNorm,
    MLP,
    NumericalError,
    Rect,
    SampleGrid,
    TaggedPointSet,
    TrainConfig,
    TrainRecord,
    TrainResult,
    cca,
    derivatives,
    derive_seed,
    fd_solve,
    init_net,
    loss,
    sample_activations,
    sample_points,
    self_similarity,
    source_term,
    svcca_similarity,
    train,
)

__all__ = [
    "AdamParams",
    "ActivationMatrix",
    "BatchDerivatives",
    "BVPSpec",
    "CCAResult",
    "ConfigError",
    "LossNorm",
    "MLP",
    "NumericalError",
    "Rect",
    "SampleGrid",
    "TaggedPointSet",
    "TrainConfig",
    "TrainRecord",
    "TrainResult",
    "cca",
    "derivatives",
    "derive_seed",
    "fd_solve",
    "init_net",
    "loss",
    "sample_activations",
    "sample_points",
    "self_similarity",
    "source_term",
    "svcca_similarity",
    "train",
]

__version__ = "0.1.0"
