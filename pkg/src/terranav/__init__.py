"""Terrain-aware navigation with learned self-correction.

A tensor-structured model recognizes terrain from windowed multi-modal
features and generates navigation behaviors, a reweighted block solver fits
it with a monotonically decreasing objective, and a closed-loop controller
adds a learned offset that corrects the gap between commanded and realized
behaviors.  A deterministic 2-D simulator and a metrics harness validate the
loop end to end.
"""

from .controller import CommandLimits, ControlCommand, HistoryBuffer, generate
from .metrics import BenchmarkReport, inconsistency, jerkiness, summarize
from .model import (
    Dataset,
    FeatureLayout,
    Hyperparams,
    ModelWeights,
    assemble_instances,
    behavior_norm,
    gradient,
    history_norm,
    importance_report,
    objective,
    orth_penalty,
    predict_behavior,
    predict_offset,
    predict_terrain,
)
from .simulator import (
    FeatureGenerator,
    RobotState,
    Setback,
    SimParams,
    TerrainSegment,
    TrialLog,
    expert_policy,
    gen_dataset,
    run_trial,
    step,
)
from .solver import Reweights, SolverConfig, SolverReport, compute_reweights, solve
from .tensor_core import (
    DimensionError,
    NumericError,
    Tensor3,
    contract,
    fro_norm,
    log_cosh_sum,
)

__version__ = "0.1.0"
