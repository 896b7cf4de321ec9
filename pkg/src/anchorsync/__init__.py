"""Anchored spectral synchronization of rigid motions over SE(d)."""

from .datamatrix import DataMatrix, build_omega, build_rotation_only_omega
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DegenerateProjectionWarning,
    DegenerateSpectrumWarning,
    DiagnosticsUnavailableError,
    DimensionMismatchError,
    IncompleteGraphError,
    InvalidInputError,
    PlyFormatError,
)
from .estimators import EstimateSet, ase, estimate, naive_projection, recover_translations, two_stage
from .evaluation import ErrorReport, align_global, error_report
from .geometry import RigidMotion, geodesic_angle_deg, project_so, random_rotation, relative
from .spectral import SpectralBasis, smallest_eigvecs
from .synthesis import (
    GroundTruth,
    ObservationSet,
    generate_ground_truth,
    observations_from_motions,
    synthesize_observations,
)

__version__ = "0.1.0"
