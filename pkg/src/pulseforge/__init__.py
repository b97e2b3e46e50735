"""Design of control pulses that implement quantum gates robustly.

The toolkit searches for time-dependent control waveforms whose evolution
realizes a target gate not just at the nominal operating point but over a
whole range of uncontrollable system parameters (field strength, detuning).
Gradients of the gate error are obtained by back-propagating an adjoint
state, and robustness is enforced by minimizing the worst objective over a
discrete set of parameter values.
"""

from .controls import (
    ControlWaveform,
    FourierParametrization,
    amplitude_violation,
    synthesis_jacobian,
    synthesize,
)
from .systems import (
    HamiltonianModel,
    SystemParameters,
    TargetGate,
    identity_target,
    phase_gate_target,
    reqc_model,
)
from .propagation import (
    AdjointTrajectory,
    EvolutionTrajectory,
    certify_step_doubling,
    gradient_integrand,
    propagate_adjoint,
    propagate_forward,
    step_doubling_defect,
)
from .objectives import (
    FidelityReport,
    PenaltySpec,
    QubitRestriction,
    adjoint_boundary,
    check_bound,
    fidelity_report,
    objective_and_gradient,
    optimized_adjoint_boundary,
    terminal_cost,
    trace_fidelity,
    worst_case_fidelity,
)
from .minimax import (
    MinimaxResult,
    OptimizerOptions,
    ParameterGrid,
    aggregate,
    default_reqc_grid,
    default_target_map,
    evaluate_grid,
    initial_guess,
    optimize,
)
from .baselines import (
    SechPulseSpec,
    default_sech_sequence,
    landscape,
    naive_2pi_pulse,
    sech_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory",
    "ControlWaveform",
    "EvolutionTrajectory",
    "FidelityReport",
    "FourierParametrization",
    "HamiltonianModel",
    "MinimaxResult",
    "OptimizerOptions",
    "ParameterGrid",
    "PenaltySpec",
    "QubitRestriction",
    "SechPulseSpec",
    "SystemParameters",
    "TargetGate",
    "adjoint_boundary",
    "aggregate",
    "amplitude_violation",
    "certify_step_doubling",
    "check_bound",
    "default_reqc_grid",
    "default_sech_sequence",
    "default_target_map",
    "evaluate_grid",
    "fidelity_report",
    "gradient_integrand",
    "step_doubling_defect",
    "identity_target",
    "initial_guess",
    "landscape",
    "naive_2pi_pulse",
    "objective_and_gradient",
    "optimize",
    "optimized_adjoint_boundary",
    "phase_gate_target",
    "propagate_adjoint",
    "propagate_forward",
    "reqc_model",
    "sech_sequence",
    "synthesis_jacobian",
    "synthesize",
    "terminal_cost",
    "trace_fidelity",
    "worst_case_fidelity",
]
