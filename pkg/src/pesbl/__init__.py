"""Discovery of governing PDEs from noisy space-time data.

The pipeline: simulate or load measurements, denoise and differentiate,
project the regression onto low frequencies, run the parsimony-enhanced
sparse Bayesian learner, refine coefficient posteriors against the raw data
by MCMC, then propagate, diagnose, or pool across experiment populations.
"""

from .errors import ConfigError, DegenerateDataError, SolverInstability, TrainingError
from .fields import FieldSeries, GridSpec, read_field, resample, write_field
from .dynamics import (
    PdeModel,
    SolverConfig,
    add_noise,
    solve_burgers_1d,
    solve_burgers_2d,
    solve_generic,
    solve_generic_batch,
    solve_kdv,
)
from .library import (
    Library,
    TermSpec,
    build_library_1d,
    build_library_2d,
    term_by_name,
    term_complexity_sum,
    vocabulary,
)

__all__ = [
    "ConfigError", "DegenerateDataError", "SolverInstability", "TrainingError",
    "FieldSeries", "GridSpec", "read_field", "resample", "write_field",
    "PdeModel", "SolverConfig", "add_noise",
    "solve_burgers_1d", "solve_burgers_2d", "solve_generic", "solve_generic_batch",
    "solve_kdv",
    "Library", "TermSpec", "build_library_1d", "build_library_2d",
    "term_by_name", "term_complexity_sum", "vocabulary",
]

__version__ = "0.1.0"
