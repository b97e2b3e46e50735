"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.optimize


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_restriction(rng: np.random.Generator, n: int, extra_max: int = 2) -> np.ndarray:
    """n x n corner of a Haar unitary of dimension n .. n+extra_max."""
    d = n + int(rng.integers(0, extra_max + 1))
    return haar_unitary(rng, d)[:n, :n]


def grid_overlap_oracle(o: np.ndarray, n_theta: int = 1024, n_phi: int = 1024,
                        polish: bool = True) -> float:
    """Dense-grid minimum of |<psi|O|psi>| over the Bloch sphere (n = 2).

    Scans ~1e6 states psi = (cos(t/2), e^{i p} sin(t/2)); optionally polishes
    the best grid point with derivative-free Nelder-Mead, which stays
    independent of the production quasi-Newton multistart path.
    """
    thetas = np.linspace(0.0, np.pi, n_theta)
    phis = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    ct = np.cos(0.5 * thetas)[:, None]
    st = np.sin(0.5 * thetas)[:, None]
    e = np.exp(1j * phis)[None, :]
    vals = np.abs(
        o[0, 0] * ct**2
        + o[1, 1] * st**2
        + o[0, 1] * ct * st * e
        + o[1, 0] * ct * st * np.conj(e)
    )
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    best = float(vals[i, j])
    if not polish:
        return best

    def objective(x):
        t, p = x
        psi0 = np.cos(0.5 * t)
        psi1 = np.exp(1j * p) * np.sin(0.5 * t)
        psi = np.array([psi0, psi1])
        return abs(np.vdot(psi, o @ psi))

    res = scipy.optimize.minimize(
        objective, np.array([thetas[i], phis[j]]), method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 2000},
    )
    return float(min(best, res.fun))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
