"""Double Bragg diffraction pulses and Mach-Zehnder interferometry.

Recoil units throughout: hbar = 1, k_L = 1, omega_rec = 1, so the atom
mass is 1/2, a plane wave |p> carries energy p^2 and the two-photon
resonance sits at 4 omega_rec.
"""

from .exceptions import (
    BoundViolation,
    ConfigError,
    EmptyState,
    IntegratorFailure,
    NoExtremaFound,
    OutOfZone,
    PoleProximity,
    ResolutionError,
    SpectralOverflow,
)
from .grid import (
    GridSpec,
    GridState,
    MomentumPortHistogram,
    apply_port_projector,
    free_propagate_analytic,
    load_spectrum,
    momentum_histogram,
    prepare_wavepacket,
    save_spectrum,
    split_step_pulse,
)
from .interferometer import (
    ContrastResult,
    FluctuationResult,
    FringeFit,
    FringeScan,
    MzConfig,
    PulseSMatrix,
    contrast_sweep,
    default_t_grid,
    extract_contrast,
    fit_fringe,
    fluctuation_robustness,
    free_propagator,
    ideal_bs_matrix,
    ideal_mirror_matrix,
    oracle_fringe,
    port_populations,
    pulse_s_matrix,
    semiclassical_phase,
    t_scan,
    three_path_amplitudes,
    total_s_matrix,
)
from .io import ResultTable, ScenarioConfig
from .multilevel import (
    LevelBasis,
    MultiLevelState,
    PulseEfficiency,
    bare_momentum_populations,
    bare_transform,
    bs_efficiency,
    build_hamiltonian,
    efficiency_landscape,
    evolve_pulse,
    integrated_efficiency,
    mirror_efficiency,
    propagate_unitaries,
)
from .strategies import (
    OptimizationProblem,
    OptimizationResult,
    StrategySpec,
    bs_cost,
    builtin_strategy,
    integrated_mirror_efficiency,
    load_knot_table,
    mirror_cost,
    oct_mirror_envelope,
    oct_mirror_problem,
    optimize,
    save_knot_table,
)
from .tls import (
    AcStarkCoefficients,
    TlsState,
    TlsTrajectory,
    ac_stark_coefficients,
    differential_detuning,
    evolve_tls,
    pulse_area_probability,
    rwa_hamiltonian,
    rwa_probability,
    tls_hamiltonian,
)
from .units import (
    ConstantDetuning,
    GaussianWavePacket,
    KnotDetuning,
    LinearDetuning,
    PolarizationError,
    PulseEnvelope,
    carrier_factor,
    doppler_sweep_2024,
    fixed_rate_sweep,
)

__version__ = "0.1.0"
