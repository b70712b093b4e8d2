"""Numerical tolerances and defaults shared across the package."""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # per-tree probability sums (structural completeness)
    structural: float = 1e-10
    # exact algebraic identities (simplex sums, round trips)
    algebraic: float = 1e-12
    # order constraints on recovered estimates
    order: float = 1e-8
    # interior margin for Fisher information evaluation
    interior: float = 1e-6
    # floor for probabilities inside logarithms
    prob_floor: float = 1e-12


TOL = Tolerances()

# finite-difference steps
FISHER_STEP = 1e-5
DELTA_STEP = 1e-6

DEFAULT_STARTS = 20
START_LOW, START_HIGH = 0.05, 0.95
DEFAULT_MC_SAMPLES = 2_000_000
MAX_POLYTOPE_K = 12
