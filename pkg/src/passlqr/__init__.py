"""Passivity-constrained LQR synthesis toolkit."""

from .certify import (
    FeasiblePair,
    PassivityCertificate,
    PassivityMode,
    certify_common,
    certify_gain,
    find_passivating_gain,
    kyp_block,
    validate_certificate,
)
from .errors import PassLqrError
from .feasibility import SearchBudget
from .flow import CostEvaluation, FlowConfig, FlowTrajectory, evaluate_cost, integrate_flow
from .linalg import SpectralSummary, solve_care, solve_lyapunov, spectral_summary
from .pipeline import PipelineOptions, RunLedger, run_pipeline
from .plant import LtiPlant
from .polytope import GainPolytope, box_polytope, constraints_at, inscribe_polytope, projection_operator
from .region import ExploreConfig, GainCube, VerifiedRegion, explore, precheck_optimal, verify_cube

__all__ = [
    "CostEvaluation",
    "ExploreConfig",
    "FeasiblePair",
    "FlowConfig",
    "FlowTrajectory",
    "GainCube",
    "GainPolytope",
    "LtiPlant",
    "PassLqrError",
    "PassivityCertificate",
    "PassivityMode",
    "PipelineOptions",
    "RunLedger",
    "SearchBudget",
    "SpectralSummary",
    "VerifiedRegion",
    "box_polytope",
    "certify_common",
    "certify_gain",
    "constraints_at",
    "evaluate_cost",
    "explore",
    "find_passivating_gain",
    "inscribe_polytope",
    "integrate_flow",
    "kyp_block",
    "precheck_optimal",
    "projection_operator",
    "run_pipeline",
    "solve_care",
    "solve_lyapunov",
    "spectral_summary",
    "validate_certificate",
    "verify_cube",
]

__version__ = "0.1.0"
