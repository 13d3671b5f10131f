"""lu_flow: spectral Galerkin simulation and verification of 2D Navier-Stokes
under location-uncertainty transport noise on the periodic torus."""

from .spectral import (
    SpectralScalar,
    SpectralVelocity,
    TorusGrid,
    dealiased_product,
    energy,
    enstrophy,
    h_norm,
    leray_project,
    load_snapshot,
    save_snapshot,
    spectral_derivative,
    v_norm,
)
from .noise import NoiseModel, WienerPath, build_noise_model, check_regularity, sample_increments
from .operators import (
    OperatorContext,
    apply_A,
    apply_B,
    apply_F,
    apply_G_column,
    change_of_variable,
    inverse_change,
    noise_increment,
)
from .solver import (
    BlowUpError,
    SolverConfig,
    TrajectoryRecord,
    build_context,
    make_initial,
    run,
    run_deterministic,
    run_scalar_transport,
    step,
)
from .diagnostics import (
    ContractionReport,
    ConvergenceReport,
    contraction_test,
    energy_budget_transport,
    energy_estimate_check,
    epsilon_convergence_study,
)
from .config import ConfigError, RunManifest, config_hash, parse_config

__version__ = "0.1.0"
