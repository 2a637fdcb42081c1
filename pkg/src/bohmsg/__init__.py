"""Bohmian trajectories for entangled spin-1/2 particles in Stern-Gerlach magnets."""
from .physics import (
    DerivedConstants,
    InvalidParameterError,
    PacketValue,
    PhysicalParams,
    derive_constants,
    exit_speed,
    packet_free,
    packet_z,
    post_magnet_center,
    screen_pattern,
    spread_at,
)
from .states import (
    BranchState,
    MagnetAxis,
    MeasurementConfig,
    axis_coordinate,
    born_distribution,
    correlation,
    ghz4_branches,
    mermin_branches,
    singlet_branches,
)
from .velocity import (
    NodeProximityError,
    PhaseSpacePoint,
    branch_velocity,
    numeric_velocity_oracle,
    transverse_velocity,
)
from .dynamics import Outcome, StepControl, StiffnessError, Trajectory, classify, integrate
from .experiments import (
    ContradictionReport,
    CorrelationEstimate,
    InitialSample,
    chsh,
    contradiction_fraction,
    estimate_correlation,
    ghz4_check,
    mermin_check,
    run_joint,
    sample_initials,
    two_particle_contradiction,
)

__version__ = "0.1.0"
