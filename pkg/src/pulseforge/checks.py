"""Self-contained property suites: gradient exactness, unitarity, the
fidelity bound, and the equivalence of the two adjoint boundary choices.

These back both the ``check`` command and the acceptance tests.  Each suite
draws its cases from a seeded generator so failures are replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .controls import FourierParametrization, synthesize
from .objectives import (
    adjoint_boundary,
    objective_and_gradient,
    optimized_adjoint_boundary,
    trace_fidelity,
    worst_case_fidelity,
)
from .propagation import propagate_forward
from .systems import SystemParameters, identity_target, phase_gate_target, reqc_model

__all__ = [
    "SuiteResult",
    "random_problem",
    "check_gradient_vs_fd",
    "check_unitarity",
    "check_fidelity_bound",
    "check_boundary_equivalence",
    "run_all_checks",
    "write_failure_report",
]

GRADIENT_TOLERANCE = 1e-6
UNITARITY_TOLERANCE = 1e-10
BOUND_TOLERANCE = 1e-9
EQUIVALENCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_error: float
    threshold: float
    passed: bool
    n_cases: int
    failing_case: dict | None = None


def random_problem(rng: np.random.Generator, max_harmonics: int = 8):
    """Random small design problem: REQC model, random point, random pulse."""
    k = int(rng.integers(1, max_harmonics + 1))
    coeffs = 0.3 * rng.standard_normal((4, 1 + 2 * k))
    params = FourierParametrization(
        n_controls=4,
        n_harmonics=k,
        duration=float(rng.uniform(1.0, 4.0)),
        coefficients=coeffs,
        amplitude_bound=10.0,
    )
    xi = SystemParameters(
        gamma=float(rng.uniform(0.5, 1.5)), delta=float(rng.uniform(-1.0, 1.0))
    )
    target = phase_gate_target() if rng.random() < 0.5 else identity_target(2)
    return params, xi, target


def check_gradient_vs_fd(
    seed: int = 0,
    n_problems: int = 20,
    n_steps: int = 64,
    corrupt_gradient: bool = False,
) -> SuiteResult:
    """Adjoint gradient against Richardson-refined central differences.

    The two-step central-difference oracle (steps h and h/2, extrapolated)
    resolves the gradient to ~1e-10 absolute, limited by propagation
    roundoff in the objective divided by the step.  Per-coefficient
    relative errors therefore use the denominator max(|fd_j|, 1e-2 * |fd|_inf):
    coefficients carrying less than a percent of the gradient magnitude sit
    at the oracle's noise floor and are judged against the overall scale.
    """
    rng = np.random.default_rng(seed)
    model = reqc_model()
    h = 2e-4
    worst = 0.0
    failing = None
    for case in range(n_problems):
        params, xi, target = random_problem(rng)
        _, grad = objective_and_gradient(model, xi, target, params, n_steps=n_steps)
        if corrupt_gradient:
            grad = -grad
        fd = np.zeros_like(grad)
        coeffs = params.coefficients

        def j_at(c_matrix):
            value, _ = objective_and_gradient(
                model, xi, target, params.with_coefficients(c_matrix), n_steps=n_steps
            )
            return value

        for c in range(coeffs.shape[0]):
            for j in range(coeffs.shape[1]):
                def central(step):
                    plus = coeffs.copy()
                    minus = coeffs.copy()
                    plus[c, j] += step
                    minus[c, j] -= step
                    return (j_at(plus) - j_at(minus)) / (2.0 * step)

                d_h, d_half = central(h), central(0.5 * h)
                fd[c, j] = (4.0 * d_half - d_h) / 3.0
        floor = 1e-2 * max(np.max(np.abs(fd)), 1e-9)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), floor)
        err = float(np.max(rel))
        if err > worst:
            worst = err
            if err > GRADIENT_TOLERANCE:
                failing = {
                    "suite": "gradient_vs_fd",
                    "seed": seed,
                    "case_index": case,
                    "gamma": xi.gamma,
                    "delta": xi.delta,
                    "duration": params.duration,
                    "n_harmonics": params.n_harmonics,
                    "coefficients": params.coefficients.tolist(),
                    "max_rel_error": err,
                }
    return SuiteResult(
        name="gradient_vs_fd",
        max_error=worst,
        threshold=GRADIENT_TOLERANCE,
        passed=worst <= GRADIENT_TOLERANCE,
        n_cases=n_problems,
        failing_case=failing,
    )


def check_unitarity(seed: int = 0, n_problems: int = 10, n_steps: int = 256) -> SuiteResult:
    """Unitarity drift of forward propagation for the Hermitian model."""
    rng = np.random.default_rng(seed)
    model = reqc_model()
    worst = 0.0
    failing = None
    eye = np.eye(model.dimension)
    for case in range(n_problems):
        params, xi, _ = random_problem(rng)
        waveform = synthesize(params, n_steps)
        traj = propagate_forward(model, xi, waveform)
        defect = traj.operators.conj().transpose(0, 2, 1) @ traj.operators - eye
        err = float(np.max(np.abs(defect)))
        if err > worst:
            worst = err
            if err > UNITARITY_TOLERANCE:
                failing = {
                    "suite": "unitarity",
                    "seed": seed,
                    "case_index": case,
                    "gamma": xi.gamma,
                    "delta": xi.delta,
                    "max_defect": err,
                }
    return SuiteResult(
        name="unitarity",
        max_error=worst,
        threshold=UNITARITY_TOLERANCE,
        passed=worst <= UNITARITY_TOLERANCE,
        n_cases=n_problems,
        failing_case=failing,
    )


def _haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_restrictions(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """Random n x n corners of Haar-random unitaries of dimension n..n+2."""
    out = np.empty((count, n, n), dtype=complex)
    dims = n + rng.integers(0, 3, size=count)
    for i in range(count):
        out[i] = _haar_unitary(rng, int(dims[i]))[:n, :n]
    return out


def _support_fidelities(restrictions: np.ndarray, n_scan: int = 128) -> np.ndarray:
    """Vectorized worst-case overlap of many restrictions at once.

    Same support-function method as
    :func:`pulseforge.objectives.worst_case_fidelity_support`, batched: a
    coarse angular scan followed by golden-section refinement carried out
    in lockstep across all cases.
    """
    count = restrictions.shape[0]
    o_dag = restrictions.conj().transpose(0, 2, 1)

    def lam_min(theta: np.ndarray) -> np.ndarray:
        ph = np.exp(-1j * theta)[:, None, None]
        return np.linalg.eigvalsh(
            0.5 * (ph * restrictions + np.conj(ph) * o_dag)
        )[:, 0]

    thetas = np.linspace(0.0, 2.0 * np.pi, n_scan, endpoint=False)
    best_val = np.full(count, -np.inf)
    best_theta = np.zeros(count)
    for theta in thetas:
        vals = lam_min(np.full(count, theta))
        better = vals > best_val
        best_val[better] = vals[better]
        best_theta[better] = theta
    width = 2.0 * np.pi / n_scan
    a = best_theta - width
    b = best_theta + width
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = lam_min(c)
    fd = lam_min(d)
    for _ in range(64):
        left = fc > fd  # keep [a, d]; otherwise keep [c, b]
        a_new = np.where(left, a, c)
        b_new = np.where(left, d, b)
        c_new = np.where(left, b_new - invphi * (b_new - a_new), d)
        d_new = np.where(left, c, a_new + invphi * (b_new - a_new))
        probe = np.where(left, c_new, d_new)
        f_probe = lam_min(probe)
        fc_new = np.where(left, f_probe, fd)
        fd_new = np.where(left, fc, f_probe)
        a, b, c, d, fc, fd = a_new, b_new, c_new, d_new, fc_new, fd_new
    return np.maximum(0.0, np.maximum(best_val, np.maximum(fc, fd)))


def check_fidelity_bound(
    seed: int = 0, n_samples: int = 10000, dims=(2, 3, 4)
) -> SuiteResult:
    """1 - F <= n (1 - T) on random unitary restrictions, every dimension.

    Reports the worst violation (positive means the bound failed) plus the
    worst deviation from equality on the rank-one-defect family that
    saturates the bound.
    """
    rng = np.random.default_rng(seed)
    worst = -np.inf
    failing = None
    for n in dims:
        restrictions = random_restrictions(rng, n, n_samples)
        f = _support_fidelities(restrictions)
        t = np.abs(np.trace(restrictions, axis1=1, axis2=2)) / n
        violation = (1.0 - f) - n * (1.0 - t)
        idx = int(np.argmax(violation))
        err = float(violation[idx])
        if err > worst:
            worst = err
            if err > BOUND_TOLERANCE:
                failing = {
                    "suite": "fidelity_bound",
                    "seed": seed,
                    "n": int(n),
                    "case_index": idx,
                    "violation": err,
                }
    # Equality family: O = 1 - (1 - F0)|psi><psi| meets the bound exactly.
    ident = identity_target(2)
    for f0 in (0.0, 0.25, 0.5, 0.75, 1.0):
        w = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        w /= np.linalg.norm(w)
        o = np.eye(2) - (1.0 - f0) * np.outer(w, w.conj())
        f = worst_case_fidelity(ident, o, (0, 1))
        t = trace_fidelity(ident, o, (0, 1))
        gap = abs(2.0 * (1.0 - t) - (1.0 - f))
        worst = max(worst, gap)
        if gap > BOUND_TOLERANCE and failing is None:
            failing = {"suite": "fidelity_bound", "family_f0": f0, "equality_gap": gap}
    return SuiteResult(
        name="fidelity_bound",
        max_error=worst,
        threshold=BOUND_TOLERANCE,
        passed=worst <= BOUND_TOLERANCE,
        n_cases=len(dims) * n_samples + 5,
        failing_case=failing,
    )


def check_boundary_equivalence(
    seed: int = 0, n_problems: int = 20, n_steps: int = 64
) -> SuiteResult:
    """Standard vs norm-minimizing adjoint boundary: same gradient, smaller norms."""
    rng = np.random.default_rng(seed)
    model = reqc_model()
    worst = 0.0
    failing = None
    for case in range(n_problems):
        params, xi, target = random_problem(rng)
        _, g_std = objective_and_gradient(
            model, xi, target, params, n_steps=n_steps, use_optimized_boundary=False
        )
        _, g_opt = objective_and_gradient(
            model, xi, target, params, n_steps=n_steps, use_optimized_boundary=True
        )
        scale = max(float(np.max(np.abs(g_std))), 1e-12)
        rel = float(np.max(np.abs(g_std - g_opt))) / scale
        waveform = synthesize(params, n_steps)
        forward = propagate_forward(model, xi, waveform)
        b_std = adjoint_boundary(target, forward.final, model.qubit_indices)
        b_opt = optimized_adjoint_boundary(target, forward, model.qubit_indices)
        norm_increase = float(
            np.max(np.linalg.norm(b_opt, axis=0) - np.linalg.norm(b_std, axis=0))
        )
        err = max(rel, norm_increase)
        if err > worst:
            worst = err
            if err > EQUIVALENCE_TOLERANCE:
                failing = {
                    "suite": "boundary_equivalence",
                    "seed": seed,
                    "case_index": case,
                    "gamma": xi.gamma,
                    "delta": xi.delta,
                    "gradient_rel_diff": rel,
                    "column_norm_increase": norm_increase,
                }
    return SuiteResult(
        name="boundary_equivalence",
        max_error=worst,
        threshold=EQUIVALENCE_TOLERANCE,
        passed=worst <= EQUIVALENCE_TOLERANCE,
        n_cases=n_problems,
        failing_case=failing,
    )


def run_all_checks(
    seed: int = 0, fast: bool = False, corrupt_gradient: bool = False
) -> list[SuiteResult]:
    """All four property suites; ``fast`` shrinks the sample counts."""
    n_grad = 5 if fast else 20
    n_bound = 1000 if fast else 10000
    n_equiv = 5 if fast else 20
    return [
        check_gradient_vs_fd(seed=seed, n_problems=n_grad, corrupt_gradient=corrupt_gradient),
        check_unitarity(seed=seed, n_problems=5 if fast else 10),
        check_fidelity_bound(seed=seed, n_samples=n_bound),
        check_boundary_equivalence(seed=seed, n_problems=n_equiv),
    ]


def write_failure_report(results, path) -> None:
    """Serialize the failing cases for replay."""
    payload = [asdict(r) for r in results if not r.passed]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
