"""Margin of victory computation for single transferable vote elections."""

__version__ = "0.1.0"

from .bounds import (LowerBoundBreakdown, Manipulation, infer_possible_signatures, initial_upper_bound,
                     prefix_lower_bound, simple_stv_ub, upper_bound_manipulations, winner_elimination_ub)
from .count import (CountResult, RoundRecord, admits_order, apply_manipulation, counted, outcome_changes,
                    possible_outcomes, run_count)
from .distance import (DistanceModel, DistanceResult, EquivalenceClasses, build_distance_model,
                       distance_to, equivalence_classes)
from .election import (ELECTED, ELIMINATED, Candidate, CandidateOrder, Election, ElectionError,
                       ParseError, Profile, UnsupportedFormatError, droop_quota, load_election,
                       parse_preflib, parse_profile, serialize)
from .linear import LinearModel, export_lp, read_lp
from .milp import Limits, SolveResult, Status, solve, solve_bilinear
from .oracle import Exceeds, ManipulationDelta, brute_force_distance_to, brute_force_mov
from .relax import PiecewiseConfig, mccormick_envelope, piecewise_relaxation, relax_model
from .routes import RoundPlan, group_eliminations
from .search import (FrontierEntry, MarginResult, SearchConfig, complete_order, fix_prefix,
                     is_valid_order, margin_stv, verify_manipulation)
