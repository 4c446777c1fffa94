"""p-harmonic potentials, gradient-flow streamlines and ridges in planar convex rings."""

from ._backend import backend_name
from .closed_forms import radial_potential, radial_speed, square_ridge_oracle
from .domains import preset
from .errors import (
    ConfigError,
    ContainmentError,
    ConvergenceError,
    DegenerateGapError,
    DomainError,
    IntegrityError,
    ResolutionError,
    RingflowError,
    SingularityError,
    TracingIncompleteError,
    ValidationError,
)
from .fields import GradientField, recover_gradient
from .geometry import ConvexRegion, ConvexRing, normalize_ring
from .mesh import TriangleMesh, generate_mesh
from .ridge import BoundarySpeedProfile, RidgeGraph, boundary_speed, build_ridge, classify_meetings
from .solver import ScalarField, solve_p_laplace, solve_sweep
from .streamline import Streamline, TraceOptions, detect_meetings, speed_profile, trace
from .verify import VerificationReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "BoundarySpeedProfile",
    "ConfigError",
    "ContainmentError",
    "ConvergenceError",
    "ConvexRegion",
    "ConvexRing",
    "DegenerateGapError",
    "DomainError",
    "GradientField",
    "IntegrityError",
    "ResolutionError",
    "RidgeGraph",
    "RingflowError",
    "ScalarField",
    "SingularityError",
    "Streamline",
    "TraceOptions",
    "TracingIncompleteError",
    "TriangleMesh",
    "ValidationError",
    "VerificationReport",
    "backend_name",
    "boundary_speed",
    "build_ridge",
    "classify_meetings",
    "detect_meetings",
    "generate_mesh",
    "normalize_ring",
    "preset",
    "radial_potential",
    "radial_speed",
    "recover_gradient",
    "run_suite",
    "solve_p_laplace",
    "solve_sweep",
    "speed_profile",
    "square_ridge_oracle",
    "trace",
]
