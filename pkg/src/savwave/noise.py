"""Sampling of Q-Wiener increments in the shared sine basis.

The covariance is diagonal in the Dirichlet sine basis, so an increment over
a step tau is a vector of independent Gaussians with per-mode variance
q_k * tau.  Streams are keyed by (master seed, realization index) so that
Monte Carlo results never depend on scheduling, and coarse increments for
convergence studies are defined as in-order sums of fine increments of the
same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

__all__ = [
    "CovarianceSpec",
    "NoiseIncrement",
    "RngStream",
    "power_covariance",
    "trace",
    "covariance_tail",
    "sample_increment",
    "sample_block",
    "coupled_path",
    "hs_norm_sq_of_g",
    "trace_operator",
]


@dataclass(frozen=True)
class CovarianceSpec:
    """Eigenvalues q_k > 0 of the noise covariance in the sine basis.

    `decay` records the exponent when q_k = k^(-decay); None for custom q.
    """

    q: np.ndarray
    decay: float | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("covariance weights must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("covariance weights must be positive and finite")
        object.__setattr__(self, "q", q)

    @property
    def modes(self):
        return self.q.size


def power_covariance(modes, decay=2.0):
    """Covariance with q_k = k^(-decay) on the first `modes` sine modes."""
    k = np.arange(1, modes + 1, dtype=np.float64)
    return CovarianceSpec(k**-decay, decay=decay)


def trace(cov):
    """Truncated trace sum_k q_k over the retained modes."""
    return float(np.sum(cov.q))


def covariance_tail(cov):
    """Neglected tail sum_{k>K} q_k for a power-decay covariance, else None."""
    if cov.decay is None or cov.decay <= 1.0:
        return None
    return float(zeta(cov.decay) - np.sum(cov.q))


class RngStream:
    """Counter-based Gaussian stream for one realization.

    Identical (seed, index) pairs replay identical sequences regardless of
    thread count or draw granularity: an (n, K) block equals n successive
    K-draws.  A single stream must not be shared between consumers.
    """

    def __init__(self, seed, index=0):
        self.seed = int(seed)
        self.index = int(index)
        self.counter = 0
        key = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.index,))
        self._gen = np.random.Generator(np.random.Philox(key))

    def normals(self, shape):
        out = self._gen.standard_normal(shape)
        self.counter += out.size
        return out

    def __repr__(self):
        return f"RngStream(seed={self.seed}, index={self.index}, counter={self.counter})"


@dataclass(frozen=True)
class NoiseIncrement:
    """One Wiener increment: sine coefficients sqrt(q_k*tau)*xi_k over step tau."""

    coeffs: np.ndarray
    tau: float

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if not np.all(np.isfinite(c)):
            raise ValueError("increment coefficients must be finite")
        object.__setattr__(self, "coeffs", c)


def sample_increment(cov, tau, rng):
    """Draw one increment with per-mode standard deviation sqrt(q_k*tau)."""
    if tau <= 0:
        raise ValueError(f"step size must be positive, got {tau}")
    xi = rng.normals(cov.modes)
    return NoiseIncrement(np.sqrt(cov.q * tau) * xi, float(tau))


def sample_block(cov, tau, n_steps, rng):
    """(n_steps, K) array of increments; row j equals the j-th sequential draw."""
    if tau <= 0:
        raise ValueError(f"step size must be positive, got {tau}")
    xi = rng.normals((n_steps, cov.modes))
    return np.sqrt(cov.q * tau) * xi


def _check_dyadic(m):
    if m < 1 or (m & (m - 1)) != 0:
        raise ValueError(f"coarse multiple must be a power of two, got {m}")


def coupled_path(cov, tau_fine, n_fine, multiples, rng):
    """Fine increments plus their in-order aggregates at each coarse multiple.

    Returns {m: array of shape (n_fine//m, K)} where every coarse increment is
    the left-to-right sum of its m constituent fine increments, bit for bit.
    """
    for m in multiples:
        _check_dyadic(m)
        if n_fine % m:
            raise ValueError(f"multiple {m} does not divide {n_fine} fine steps")
    fine = sample_block(cov, tau_fine, n_fine, rng)
    out = {}
    for m in multiples:
        if m == 1:
            out[m] = fine
            continue
        agg = np.zeros((n_fine // m, cov.modes))
        for i in range(m):
            agg += fine[i::m]
        out[m] = agg
    return out


def hs_norm_sq_of_g(u_nodal, g, cov, grid):
    """Quadrature of sum_k q_k * int g(u(x))^2 e_k(x)^2 dx on the given grid.

    This is the squared Hilbert-Schmidt norm of the multiplication operator
    g(u)*Q^(1/2); for constant g it reduces to g^2 * trace(cov).
    """
    u_nodal = np.asarray(u_nodal, dtype=np.float64)
    k = np.arange(1, cov.modes + 1)
    basis_sq = 2.0 * np.sin(np.pi * np.outer(grid.x, k)) ** 2
    density = basis_sq @ cov.q
    gv = g(u_nodal)
    return float(np.sum(grid.weights * gv**2 * density))


def trace_operator(cov, ops):
    """Callable mapping nodal g-values to the Hilbert-Schmidt trace term.

    For quadrature-diagonal spaces the trace is a weighted sum of g^2; for
    spaces with a nodal Gram matrix (finite elements) the full bilinear form
    with the noise correlation at the nodes is used.
    """
    k = np.arange(1, cov.modes + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(ops.x, k))
    if ops.l2_gram is None:
        density = (basis**2) @ cov.q
        weights = ops.weights * density

        def apply(g_vals):
            return g_vals**2 @ weights

    else:
        corr = (basis * cov.q) @ basis.T
        form = ops.l2_gram * corr

        def apply(g_vals):
            return np.einsum("...i,ij,...j->...", g_vals, form, g_vals)

    return apply
