"""Problem definition and the machinery turning pointwise maps into operators.

A `Problem` bundles the drift f with its antiderivative, the diffusion g, the
radicand shift delta0, initial data, and the noise covariance.  A
`Discretization` carries everything needed to evaluate Nemytskii operators on
coefficient vectors: eigenvalues of the negative Laplacian in the active
orthonormal basis, synthesis/analysis maps between coefficients and nodal
values, and a trapezoid quadrature.  The same interface backs the sine
spectral space and the finite element space, so the time steppers never
branch on the backend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .noise import CovarianceSpec, power_covariance
from .spectral import SpectralField, _derivative_matrix, _synthesis_matrix, eigenvalues

__all__ = [
    "ModelViolationError",
    "QuadratureGrid",
    "Discretization",
    "Problem",
    "uniform_grid",
    "spectral_discretization",
    "make_problem",
    "eval_F",
    "sav_value",
    "drift_direction",
    "apply_g",
    "DRIFTS",
    "DIFFUSIONS",
]

# Hard floor for F(u) + delta0 along computed trajectories.
RADICAND_FLOOR = 1e-8


class ModelViolationError(RuntimeError):
    """The auxiliary-variable radicand F(u) + delta0 left the admissible range."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform nodes on [0,1] with composite trapezoid weights summing to one."""

    x: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.weights.shape:
            raise ValueError("nodes and weights must align")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")

    @property
    def points(self):
        return self.x.size


def uniform_grid(intervals):
    """Trapezoid grid with nodes j/M, j = 0..M."""
    if intervals < 2:
        raise ValueError(f"need at least 2 intervals, got {intervals}")
    x = np.linspace(0.0, 1.0, intervals + 1)
    w = np.full(intervals + 1, 1.0 / intervals)
    w[0] *= 0.5
    w[-1] *= 0.5
    return QuadratureGrid(x, w)


@dataclass(frozen=True)
class Discretization:
    """Coefficient-space view of one spatial backend.

    Coefficient vectors live in an orthonormal basis of the backend's L2
    inner product, so dots of coefficient vectors are L2 pairings and
    `lam`-weighted dots are H1 pairings.  `synth`/`analysis` map between
    coefficients and nodal values on `grid`; `l2_gram` is None when the
    quadrature is diagonal (spectral) and the nodal mass matrix otherwise.
    """

    lam: np.ndarray
    grid: QuadratureGrid
    synth: np.ndarray
    analysis: np.ndarray
    dsynth: np.ndarray
    l2_gram: np.ndarray | None = None

    @property
    def modes(self):
        return self.lam.size

    @property
    def x(self):
        return self.grid.x

    @property
    def weights(self):
        return self.grid.weights

    def nodal(self, coeffs):
        return coeffs @ self.synth.T

    def nodal_deriv(self, coeffs):
        return coeffs @ self.dsynth.T

    def project(self, values):
        return values @ self.analysis.T

    def quad(self, values):
        return values @ self.weights


def spectral_discretization(modes, grid_factor=2, grid_points=None):
    """Sine-basis discretization with a dealiased nodal grid (default M = 2K)."""
    m = grid_points if grid_points is not None else grid_factor * modes
    if m < modes + 1:
        raise ValueError(f"grid with {m} intervals cannot resolve {modes} modes")
    grid = uniform_grid(m)
    synth = np.array(_synthesis_matrix(modes, m))
    dsynth = np.array(_derivative_matrix(modes, m))
    analysis = (synth * grid.weights[:, None]).T
    return Discretization(eigenvalues(modes), grid, synth, analysis, dsynth)


# Built-in drift pairs (f, Ftilde) with Ftilde' = f and Ftilde(0) = 0.
DRIFTS = {
    "zero": (lambda u: np.zeros_like(u), lambda u: np.zeros_like(u)),
    "linear": (lambda u: u, lambda u: 0.5 * u**2),
    "sine": (np.sin, lambda u: 1.0 - np.cos(u)),
    "cubic": (lambda u: u**3 + u, lambda u: 0.25 * u**4 + 0.5 * u**2),
}

# Built-in diffusions as maps of (u, u_x); only "constant" uses sigma.
DIFFUSIONS = {
    "zero": lambda sigma: (lambda u, ux: np.zeros_like(u)),
    "constant": lambda sigma: (lambda u, ux: np.full_like(u, sigma)),
    "sine": lambda sigma: (lambda u, ux: np.sin(u)),
    "linear": lambda sigma: (lambda u, ux: u),
}


@dataclass(frozen=True)
class Problem:
    """Drift/diffusion/initial data defining one stochastic wave problem."""

    f: Callable
    Ftilde: Callable
    g: Callable
    delta0: float
    u0: SpectralField
    v0: SpectralField
    noise: CovarianceSpec
    f_name: str = ""
    g_name: str = ""
    sigma: float = 1.0
    uses_gradient: bool = False

    def __post_init__(self):
        if self.delta0 <= 0:
            raise ValueError(f"delta0 must be positive, got {self.delta0}")


def default_initial_displacement(modes):
    """sin(pi*x) expressed in the orthonormal sine basis."""
    c = np.zeros(modes)
    c[0] = 1.0 / np.sqrt(2.0)
    return SpectralField(c)


def make_problem(
    f="sine",
    g="sine",
    sigma=1.0,
    delta0=1.0,
    modes=64,
    noise_decay=2.0,
    noise=None,
    u0=None,
    v0=None,
):
    """Assemble a Problem from registry names and defaults u0 = sin(pi*x), v0 = 0."""
    if f not in DRIFTS:
        raise ValueError(f"unknown drift '{f}'; choose from {sorted(DRIFTS)}")
    if g not in DIFFUSIONS:
        raise ValueError(f"unknown diffusion '{g}'; choose from {sorted(DIFFUSIONS)}")
    drift, anti = DRIFTS[f]
    diffusion = DIFFUSIONS[g](sigma)
    if noise is None:
        noise = power_covariance(modes, noise_decay)
    if u0 is None:
        u0 = default_initial_displacement(modes)
    if v0 is None:
        v0 = SpectralField.zeros(modes)
    return Problem(
        f=drift,
        Ftilde=anti,
        g=diffusion,
        delta0=delta0,
        u0=u0,
        v0=v0,
        noise=noise,
        f_name=f,
        g_name=g,
        sigma=sigma,
    )


# ---------------------------------------------------------------------------
# Array cores.  These accept coefficient arrays of shape (..., K) and
# broadcast over leading axes so that batches of realizations share one code
# path with single states.


def potential(coeffs, problem, ops):
    """F(u) = int Ftilde(u(x)) dx by trapezoid on the dealiased grid."""
    return ops.quad(problem.Ftilde(ops.nodal(coeffs)))


def sav_radicand(coeffs, problem, ops):
    rad = potential(coeffs, problem, ops) + problem.delta0
    if np.any(rad < RADICAND_FLOOR):
        raise ModelViolationError(
            f"F(u) + delta0 fell below {RADICAND_FLOOR}: min {np.min(rad)}"
        )
    return rad


def drift_core(u_hat, problem, ops):
    """Normalized drift direction b = P_K f(u_hat)/s and s = sqrt(F(u_hat)+delta0)."""
    vals = ops.nodal(u_hat)
    rad = ops.quad(problem.Ftilde(vals)) + problem.delta0
    if np.any(rad < RADICAND_FLOOR):
        raise ModelViolationError(
            f"F(u) + delta0 fell below {RADICAND_FLOOR}: min {np.min(rad)}"
        )
    s = np.sqrt(rad)
    b = ops.project(problem.f(vals)) / s[..., None]
    return b, s


def diffusion_values(u, problem, ops):
    """Nodal values of g(u, u_x); the gradient is synthesized only when used."""
    vals = ops.nodal(u)
    grad = ops.nodal_deriv(u) if problem.uses_gradient else None
    return problem.g(vals, grad)


def apply_g_core(u, dw, problem, ops, g_vals=None):
    """Project the nodal product g(u, u_x)*dW back to coefficient space."""
    if g_vals is None:
        g_vals = diffusion_values(u, problem, ops)
    return ops.project(g_vals * ops.nodal(dw))


# ---------------------------------------------------------------------------
# Field-level wrappers.


def eval_F(u, problem, ops):
    """Potential F(u) of a spectral field."""
    return float(potential(u.coeffs, problem, ops))


def sav_value(u, problem, ops):
    """Auxiliary value sqrt(F(u) + delta0); aborts if the radicand degenerates."""
    return float(np.sqrt(sav_radicand(u.coeffs, problem, ops)))


def drift_direction(u_hat, problem, ops):
    """(b, s) with b the band-limited f(u_hat)/s and s = sqrt(F(u_hat)+delta0)."""
    b, s = drift_core(u_hat.coeffs, problem, ops)
    return SpectralField(b), float(s)


def apply_g(u, dw, problem, ops):
    """Field-level multiplicative noise application g(u, u_x)*dW."""
    return SpectralField(apply_g_core(u.coeffs, dw.coeffs, problem, ops))
