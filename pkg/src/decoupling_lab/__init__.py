"""Finite-model experiments for small cap decoupling over non-Archimedean fields."""
from .errors import LabError
from .localfield import Kind, LocalRing, make_ring
from .parabola import ModelParams, ParabolaFunction, lp_norm, lp_power, make_function, make_params
from .caps import Cap, Envelope, ThresholdMode, envelope_tiling, good_envelopes, small_cap_level
from .pruning import BroadNarrowLabels, PruningResult, broad_narrow, classify_pruning_levels, prune
from .ensembles import EnsembleKind, EnsembleSpec, block_lower_bound, generate, parabola_energy
from .verifiers import REGISTRY, VerificationReport, decoupling_ratio, run_check, summarize, theorem_bound
from .optimize import SearchConfig, maximize_ratio

__version__ = "0.1.0"
