"""Simulation and estimation toolkit for Fock-state measurement of trapped-ion
motional modes via spin-dependent dispersive frequency shifts."""

from .errors import (
    CalibrationError,
    ConfigError,
    FitError,
    RegressionError,
    SchedulingError,
    SpaceSizeError,
    TruncationWarning,
    ValidityWarning,
)
from .space import HilbertSpace, make_space
from .states import (
    cat_state,
    coherent_state,
    entangled_coherent_state,
    fock_populations,
    fock_state,
    mode_parity,
    prob_up,
    thermal_populations,
)
from .dynamics import (
    DispersiveCoefficients,
    DriveSegment,
    ModeSpec,
    dispersive_coefficients,
    evolve_segment,
    nonlinear_phase,
    segment_propagator,
)
from .protocol import (
    FilterPlan,
    FilterStep,
    RamseySpec,
    SimulatedRamsey,
    analytic_stark_phase,
    binary_filter_plan,
    calibrate_offset,
    calibrate_tpi,
    ideal_ramsey_unitary,
    multimode_filter_plan,
    parallel_filter_plan,
    parity_filter_plan,
    run_ramsey,
    schedule_selective_decoupling,
    simulate_trace,
)
from .measurement import (
    DetectionModel,
    EventLedger,
    estimate_population,
    pass_probability,
    run_filter_step,
    single_shot_measure,
)
from .analysis import (
    FitResult,
    FitSetting,
    RamseyDataset,
    fit_populations,
    fit_single_fock,
    linearity_regression,
    parity_from_populations,
    phase_coefficient,
    read_trace_csv,
    write_trace_csv,
)
from . import presets

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
