"""Truncated-Fourier control parametrizations and sampled waveforms.

Controls are real vectors eps(t) synthesized from a per-channel DC term
plus K cosine and K sine harmonics of the fundamental 2*pi/T.  Complex
drive channels are represented as quadrature pairs (real, imaginary), so
amplitude limits apply to the magnitude sqrt(eps_i**2 + eps_q**2) of each
pair rather than to individual components.

All values are expressed in units of the maximal resonant Rabi frequency
(amplitudes) and its inverse (times).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FourierParametrization",
    "ControlWaveform",
    "synthesize",
    "synthesis_jacobian",
    "amplitude_violation",
    "pair_magnitudes",
    "write_waveform_csv",
    "read_waveform_csv",
]


@dataclass(frozen=True)
class FourierParametrization:
    """Finite description of a T-periodic real control vector.

    ``coefficients`` has shape ``(n_controls, 1 + 2*n_harmonics)``; each row
    holds ``[dc, a_1 .. a_K, b_1 .. b_K]`` for one channel, producing

        eps_c(t) = dc + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T).

    ``amplitude_bound`` is the largest permitted quadrature-pair magnitude.
    """

    n_controls: int
    n_harmonics: int
    duration: float
    coefficients: np.ndarray
    amplitude_bound: float

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.n_harmonics < 0:
            raise ValueError(f"n_harmonics must be >= 0, got {self.n_harmonics}")
        if self.amplitude_bound <= 0:
            raise ValueError(
                f"amplitude_bound must be positive, got {self.amplitude_bound}"
            )
        coeffs = np.asarray(self.coefficients, dtype=float)
        expected = (self.n_controls, 1 + 2 * self.n_harmonics)
        if coeffs.shape != expected:
            raise ValueError(
                f"coefficients must have shape {expected}, got {coeffs.shape}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def n_coefficients(self) -> int:
        return self.coefficients.size

    def with_coefficients(self, coefficients: np.ndarray) -> "FourierParametrization":
        """Copy of this parametrization with replaced coefficient values."""
        return FourierParametrization(
            n_controls=self.n_controls,
            n_harmonics=self.n_harmonics,
            duration=self.duration,
            coefficients=np.asarray(coefficients, dtype=float).reshape(
                self.coefficients.shape
            ),
            amplitude_bound=self.amplitude_bound,
        )


@dataclass(frozen=True)
class ControlWaveform:
    """Control vector sampled on a uniform grid covering [0, T].

    ``time_grid`` has ``n_steps + 1`` strictly increasing entries starting at
    0 and ending at T; ``samples[i]`` is the control vector at
    ``time_grid[i]``, one column per channel.
    """

    time_grid: np.ndarray
    samples: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.time_grid, dtype=float)
        s = np.asarray(self.samples, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("time_grid must be 1-D with at least two entries")
        if t[0] != 0.0:
            raise ValueError("time_grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time_grid must be strictly increasing")
        if s.ndim != 2 or s.shape[0] != len(t):
            raise ValueError("samples must have one row per time-grid entry")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
            raise ValueError("waveform values must be finite")
        t = t.copy()
        s = s.copy()
        t.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "time_grid", t)
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return float(self.time_grid[-1])

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


def _basis_matrix(duration: float, n_harmonics: int, time_grid: np.ndarray) -> np.ndarray:
    """Values of the Fourier basis functions at each sample time.

    Column order matches the coefficient layout: constant, cosines of
    harmonics 1..K, sines of harmonics 1..K.
    """
    k = np.arange(1, n_harmonics + 1)
    phase = 2.0 * np.pi * np.outer(time_grid, k) / duration
    return np.hstack(
        [np.ones((len(time_grid), 1)), np.cos(phase), np.sin(phase)]
    )


def synthesize(params: FourierParametrization, n_steps: int) -> ControlWaveform:
    """Evaluate the Fourier parametrization on a uniform grid of n_steps intervals."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not np.all(np.isfinite(params.coefficients)):
        raise ValueError("coefficients must be finite")
    time_grid = np.linspace(0.0, params.duration, n_steps + 1)
    basis = _basis_matrix(params.duration, params.n_harmonics, time_grid)
    samples = basis @ params.coefficients.T
    return ControlWaveform(time_grid=time_grid, samples=samples)


def synthesis_jacobian(params: FourierParametrization, n_steps: int) -> np.ndarray:
    """Derivative of every sample with respect to every coefficient.

    Synthesis is linear and channels do not mix, so the Jacobian is the
    basis matrix itself: entry ``[i, j]`` is d eps_c(t_i) / d coefficients[c, j]
    for every channel c.  Shape ``(n_steps + 1, 1 + 2*n_harmonics)``.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    time_grid = np.linspace(0.0, params.duration, n_steps + 1)
    return _basis_matrix(params.duration, params.n_harmonics, time_grid)


def pair_magnitudes(samples: np.ndarray) -> np.ndarray:
    """Magnitude sqrt(eps_i**2 + eps_q**2) of each quadrature pair per sample."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[1] % 2 != 0:
        raise ValueError(
            f"quadrature pairing requires an even channel count, got {samples.shape[1]}"
        )
    re = samples[:, 0::2]
    im = samples[:, 1::2]
    return np.hypot(re, im)


def amplitude_violation(waveform: ControlWaveform, bound: float) -> np.ndarray:
    """Per-sample, per-pair excess of the quadrature magnitude over ``bound``.

    Returns max(0, |pair| - bound) with shape (n_samples, n_pairs); an
    all-zero result means the waveform is feasible.
    """
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    mags = pair_magnitudes(waveform.samples)
    return np.maximum(0.0, mags - bound)


def write_waveform_csv(waveform: ControlWaveform, path) -> None:
    """Write ``t,eps_1,...,eps_m`` rows, one per sample."""
    m = waveform.n_channels
    header = "t," + ",".join(f"eps_{c + 1}" for c in range(m))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for t, row in zip(waveform.time_grid, waveform.samples):
            fields = [format(t, ".17g")] + [format(v, ".17g") for v in row]
            fh.write(",".join(fields) + "\n")


def read_waveform_csv(path) -> ControlWaveform:
    """Inverse of :func:`write_waveform_csv`."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float)
    data = np.atleast_2d(data)
    if data.shape[1] < 2:
        raise ValueError(f"waveform CSV {path} needs a time column and >= 1 channel")
    return ControlWaveform(time_grid=data[:, 0], samples=data[:, 1:])
