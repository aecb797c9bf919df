"""Ground truth by brute force: eigensolve of the operator on a box.

Everything downstream (kernel quadrature, stationary-phase shortcuts,
certified tails) is cross-checked against this module, which knows
nothing about phases or amplitudes: it discretizes -d^2/dx^2 + V with
the 3-point Laplacian on a Dirichlet box and diagonalizes. The price is
a finite box, so every comparison lives inside a reflection horizon,
and a discrete spectrum, so spectral densities only exist smoothed over
several level spacings. Both limits are enforced, not advisory.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, eigvalsh_tridiagonal

from .errors import BroadeningTooNarrow, HorizonExceeded, ResourceLimit
from .potential import eval_potential

__all__ = ["DiscreteOracle", "discretize_and_solve", "propagator_ref",
           "density_ref"]

# near-zero discrete eigenvalues are artifacts; the continuum operator
# has no nonnegative point spectrum to represent
NEAR_ZERO_BAND = 10.0
HORIZON_SPEED_CAP = 16.0


@dataclass(frozen=True)
class DiscreteOracle:
    """Eigenpairs of the boxed operator in a stored energy window.

    Eigenfunctions are columns of `vectors`, normalized so that
    sum(psi^2) * spacing = 1 (the h-weighted inner product). Only
    eigenvalues up to lambda2_store are kept; that bounds memory and is
    all the windowed comparisons ever ask for. t_safe is the time a
    wave at the capped group velocity needs to reach the wall and come
    back to the center: beyond it, box reflections contaminate any
    comparison with whole-line quantities.
    """

    model: object
    half_width: float
    spacing: float
    grid: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    lambda2_store: float
    t_safe: float
    n_negative: int
    n_near_zero: int
    boundary: str = field(default="dirichlet")


def discretize_and_solve(model, half_width=200.0, spacing=0.05,
                         lambda2_store=18.0, max_nodes=100_000,
                         max_vector_bytes=5e8) -> DiscreteOracle:
    """Diagonalize the 3-point discretization on [-half_width, half_width].

    Two passes: eigenvalues alone first, to count how many fall in the
    stored window and refuse (ResourceLimit) before allocating vector
    storage that would not fit.
    """
    if spacing > 0.1 + 1e-12:
        raise ValueError("spacing must be <= 0.1 for a trusted oracle")
    if half_width < 50.0 - 1e-9:
        raise ValueError("half_width must be >= 50 for a trusted oracle")
    n_nodes = int(round(2.0 * half_width / spacing)) - 1
    if n_nodes > max_nodes:
        raise ResourceLimit(f"{n_nodes} nodes exceeds cap {max_nodes}")
    grid = -half_width + spacing * np.arange(1, n_nodes + 1)
    v = eval_potential(model, grid)
    diag = 2.0 / spacing ** 2 + v
    off = np.full(n_nodes - 1, -1.0 / spacing ** 2)
    lo = float(np.min(v)) - 1.0
    vals = eigvalsh_tridiagonal(diag, off, select="v",
                                select_range=(lo, lambda2_store))
    need = len(vals) * n_nodes * 8
    if need > max_vector_bytes:
        raise ResourceLimit(
            f"{len(vals)} eigenvectors on {n_nodes} nodes needs "
            f"{need / 1e6:.0f} MB, cap {max_vector_bytes / 1e6:.0f} MB")
    vals, vecs = eigh_tridiagonal(diag, off, select="v",
                                  select_range=(lo, lambda2_store))
    vecs = vecs / np.sqrt(spacing)
    band = NEAR_ZERO_BAND * spacing ** 2
    return DiscreteOracle(
        model=model, half_width=half_width, spacing=spacing, grid=grid,
        eigenvalues=vals, vectors=vecs, lambda2_store=lambda2_store,
        t_safe=half_width / (4.0 * np.sqrt(min(lambda2_store,
                                               HORIZON_SPEED_CAP))),
        n_negative=int(np.sum(vals < 0.0)),
        n_near_zero=int(np.sum(np.abs(vals) <= band)))


def _node_index(oracle, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= oracle.half_width):
        raise ValueError("evaluation point outside the box")
    idx = np.rint((x + oracle.half_width) / oracle.spacing).astype(int) - 1
    return np.clip(idx, 0, len(oracle.grid) - 1)


def _window(oracle, lambda2_max, lambda2_min=None):
    if lambda2_min is None:
        # spurious-at-zero band scales with the stencil, not the physics
        lambda2_min = NEAR_ZERO_BAND * oracle.spacing ** 2
    keep = oracle.eigenvalues > lambda2_min
    if lambda2_max is not None:
        keep &= oracle.eigenvalues <= lambda2_max
    return keep


def propagator_ref(oracle, t, x, xp, lambda2_max=16.0, lambda2_min=None):
    """Kernel of e^{-itP} projected on the stored positive modes.

    Snaps x, x' to the nearest grid nodes. lambda2_max=None sums every
    stored positive mode instead of the default comparison window;
    lambda2_min overrides the spacing-dependent near-zero exclusion,
    which resolution studies must pin to a common value.
    """
    cap = min(lambda2_max if lambda2_max is not None else oracle.lambda2_store,
              HORIZON_SPEED_CAP)
    horizon = oracle.half_width / (4.0 * np.sqrt(cap))
    if abs(t) > horizon:
        raise HorizonExceeded(
            f"|t| = {abs(t):g} beyond reflection horizon {horizon:g}")
    keep = _window(oracle, lambda2_max, lambda2_min)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 and np.ndim(xp) == 0
    ix = np.atleast_1d(_node_index(oracle, x))
    ixp = np.atleast_1d(_node_index(oracle, xp))
    ix, ixp = np.broadcast_arrays(ix, ixp)
    phase = np.exp(-1j * t * oracle.eigenvalues[keep])
    out = np.einsum("nk,nk->n", oracle.vectors[ix][:, keep],
                    oracle.vectors[ixp][:, keep] * phase)
    return complex(out[0]) if scalar else out


def density_ref(oracle, lam, eta, x, xp):
    """Gaussian-broadened spectral density at wavenumber lam.

    2 lam times the level sum weighted by a width-eta Gaussian in the
    energy variable. eta must cover at least three local level spacings
    or the result is granular noise, not a density.
    """
    if lam <= 0:
        raise ValueError("wavenumber must be positive")
    e0 = lam * lam
    keep = _window(oracle, None)
    vals = oracle.eigenvalues[keep]
    near = vals[np.abs(vals - e0) <= 5.0 * eta]
    if len(near) < 2:
        raise BroadeningTooNarrow(
            f"eta = {eta:g} covers {len(near)} levels at lambda^2 = {e0:g}")
    local = float(np.mean(np.diff(near)))
    if eta < 3.0 * local:
        raise BroadeningTooNarrow(
            f"eta = {eta:g} below 3 level spacings ({3.0 * local:g})")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 and np.ndim(xp) == 0
    ix = np.atleast_1d(_node_index(oracle, x))
    ixp = np.atleast_1d(_node_index(oracle, xp))
    ix, ixp = np.broadcast_arrays(ix, ixp)
    g = np.exp(-0.5 * ((vals - e0) / eta) ** 2) / (eta * np.sqrt(2.0 * np.pi))
    out = 2.0 * lam * np.einsum("nk,nk->n", oracle.vectors[ix][:, keep],
                                oracle.vectors[ixp][:, keep] * g)
    return float(out[0]) if scalar else out
