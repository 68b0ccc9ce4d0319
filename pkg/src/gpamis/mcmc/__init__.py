from .core import DIAG_INVERSE, FULL_INVERSE, IDENTITY, ChainState, MassMatrix, initial_state
from .diagnostics import chain_ess, min_ess
from .hmc import hmc_step, leapfrog
from .mh import mh_step, run_mh
from .nuts import DualAveragingParams, NutsInfo, find_reasonable_epsilon, nuts_step, nutsda_run
from .slice import slice_step
from .tuning import TuneResult, tune_scale

__all__ = [
    "DIAG_INVERSE",
    "FULL_INVERSE",
    "IDENTITY",
    "ChainState",
    "DualAveragingParams",
    "MassMatrix",
    "NutsInfo",
    "TuneResult",
    "chain_ess",
    "min_ess",
    "find_reasonable_epsilon",
    "hmc_step",
    "initial_state",
    "leapfrog",
    "mh_step",
    "nuts_step",
    "nutsda_run",
    "run_mh",
    "slice_step",
    "tune_scale",
]
