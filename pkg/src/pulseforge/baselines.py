"""Reference pulses and fidelity landscapes for comparison.

Two baselines: the naive single 2*pi pulse (exact at the nominal operating
point, fragile elsewhere) and a four-segment composite of chirped
hyperbolic-secant pulses.  The composite inverts |0> <-> |e> and back by
adiabatic passage and repeats the identical envelope on the |1> <-> |e>
transition, so the detuning-dependent phases picked up by the two qubit
states cancel in their relative phase; the carrier sign of the last
segment sets the gate phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import ControlWaveform
from .objectives import fidelity_report
from .propagation import propagate_forward
from .systems import HamiltonianModel, SystemParameters

__all__ = [
    "SechPulseSpec",
    "naive_2pi_pulse",
    "sech_sequence",
    "default_sech_sequence",
    "LandscapeResult",
    "landscape",
    "running_maximum",
    "write_landscape_csv",
]


@dataclass(frozen=True)
class SechPulseSpec:
    """One hyperbolic-secant segment of a composite sequence.

    The envelope is peak_amplitude * sech(width * (t - t_c)) with t_c the
    segment center; the instantaneous phase is
    chirp * log(cosh(width * (t - t_c))) + carrier_detuning * t.
    ``transition`` selects the driven ground state (0 or 1); a negative
    peak amplitude shifts the carrier by pi.
    """

    peak_amplitude: float
    width: float
    chirp: float = 0.0
    carrier_detuning: float = 0.0
    transition: int = 0
    segment_duration: float = 1.0

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if self.segment_duration <= 0:
            raise ValueError(
                f"segment_duration must be positive, got {self.segment_duration}"
            )
        if self.transition not in (0, 1):
            raise ValueError(f"transition must be 0 or 1, got {self.transition}")


def naive_2pi_pulse(duration: float, n_steps: int = 2048) -> ControlWaveform:
    """Constant resonant drive of pulse area exactly 2*pi on |0> <-> |e>."""
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    time_grid = np.linspace(0.0, duration, n_steps + 1)
    samples = np.zeros((n_steps + 1, 4))
    samples[:, 0] = 2.0 * np.pi / duration
    return ControlWaveform(time_grid=time_grid, samples=samples)


def sech_sequence(specs, n_steps: int = 2048) -> ControlWaveform:
    """Concatenate sech segments into a 4-channel waveform tiling [0, T]."""
    specs = list(specs)
    if not specs:
        raise ValueError("sech sequence needs at least one segment")
    durations = np.array([s.segment_duration for s in specs])
    starts = np.concatenate([[0.0], np.cumsum(durations)])
    total = float(starts[-1])
    time_grid = np.linspace(0.0, total, n_steps + 1)
    samples = np.zeros((n_steps + 1, 4))

    # Half-open membership [start, end) keeps segment ownership disjoint;
    # the final grid point belongs to the last segment.
    index = np.clip(np.searchsorted(starts, time_grid, side="right") - 1, 0, len(specs) - 1)
    for seg, spec in enumerate(specs):
        sel = index == seg
        if not np.any(sel):
            continue
        t = time_grid[sel]
        center = starts[seg] + 0.5 * spec.segment_duration
        u = spec.width * (t - center)
        envelope = spec.peak_amplitude / np.cosh(u)
        phase = spec.chirp * np.log(np.cosh(u)) + spec.carrier_detuning * t
        omega = envelope * np.exp(1j * phase)
        samples[sel, 2 * spec.transition] += omega.real
        samples[sel, 2 * spec.transition + 1] += omega.imag
    return ControlWaveform(time_grid=time_grid, samples=samples)


def default_sech_sequence(
    total_duration: float = 24.0 * np.pi,
    peak_amplitude: float = 0.95,
    width: float = 0.55,
    chirp: float = 1.4,
) -> list[SechPulseSpec]:
    """Four-segment robust phase-gate composite.

    Segments 1-2 take |0> up to |e> and back by chirped adiabatic passage
    (chirp reversed on the return); segments 3-4 repeat the same envelope
    on |1> with the final carrier sign flipped, leaving a relative phase of
    pi between the qubit states while detuning-dependent phases cancel.
    """
    seg = total_duration / 4.0
    return [
        SechPulseSpec(peak_amplitude, width, chirp, 0.0, 0, seg),
        SechPulseSpec(peak_amplitude, width, -chirp, 0.0, 0, seg),
        SechPulseSpec(peak_amplitude, width, chirp, 0.0, 1, seg),
        SechPulseSpec(-peak_amplitude, width, -chirp, 0.0, 1, seg),
    ]


@dataclass(frozen=True)
class LandscapeResult:
    """Fidelities of one waveform on a (gamma, delta) grid."""

    gammas: np.ndarray
    deltas: np.ndarray
    worst_case: np.ndarray  # (n_gamma, n_delta)
    trace: np.ndarray  # (n_gamma, n_delta)


def landscape(
    model: HamiltonianModel,
    waveform: ControlWaveform,
    target_map,
    gamma_range: tuple[float, float],
    delta_range: tuple[float, float],
    resolution,
    threads: int = 1,
) -> LandscapeResult:
    """Evaluate both fidelities of ``waveform`` over a parameter rectangle.

    ``resolution`` is either a single count or a (n_gamma, n_delta) pair;
    single-point ranges (min == max) are allowed with a count of 1.  Cells
    are independent and assembled in row-major order regardless of
    evaluation order.
    """
    if np.isscalar(resolution):
        res_g = res_d = int(resolution)
    else:
        res_g, res_d = (int(r) for r in resolution)
    if res_g < 1 or res_d < 1:
        raise ValueError(f"resolution must be >= 1 per axis, got {resolution}")
    if not (np.all(np.isfinite(gamma_range)) and np.all(np.isfinite(delta_range))):
        raise ValueError("parameter ranges must be finite")
    gammas = np.linspace(gamma_range[0], gamma_range[1], res_g)
    deltas = np.linspace(delta_range[0], delta_range[1], res_d)

    def eval_cell(idx: int):
        i, j = divmod(idx, res_d)
        xi = SystemParameters(gamma=float(gammas[i]), delta=float(deltas[j]))
        target = target_map(xi)
        final = propagate_forward(model, xi, waveform).final
        report = fidelity_report(target, final, model.qubit_indices)
        return report.worst_case_fidelity, report.trace_fidelity

    n_cells = res_g * res_d
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(eval_cell, range(n_cells)))
    else:
        results = [eval_cell(i) for i in range(n_cells)]

    worst = np.array([r[0] for r in results]).reshape(res_g, res_d)
    trace = np.array([r[1] for r in results]).reshape(res_g, res_d)
    return LandscapeResult(gammas=gammas, deltas=deltas, worst_case=worst, trace=trace)


def running_maximum(values: np.ndarray) -> np.ndarray:
    """Suffix maximum: entry i is max(values[i:]).

    Applied to an infidelity slice ordered by increasing detuning this
    yields the monotone envelope of the oscillating raw values.
    """
    return np.maximum.accumulate(np.asarray(values)[::-1])[::-1]


def write_landscape_csv(result: LandscapeResult, path, apply_running_max: bool = False) -> None:
    """Row-major ``gamma,delta,F,T`` rows with 12 significant digits.

    With ``apply_running_max`` the F column is replaced by the envelope
    1 - runmax(1 - F) along each constant-gamma row.
    """
    worst = result.worst_case
    if apply_running_max:
        worst = np.vstack([1.0 - running_maximum(1.0 - row) for row in worst])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gamma,delta,F,T\n")
        for i, g in enumerate(result.gammas):
            for j, d in enumerate(result.deltas):
                fh.write(
                    f"{g:.12g},{d:.12g},{worst[i, j]:.12g},{result.trace[i, j]:.12g}\n"
                )
