"""Closed-form attractive potential families and their decay certificates.

All profiles are smooth with derivatives through order 3 in closed form, so
the assumption certificate never relies on finite differences; the sampling
grid only has to locate suprema of slowly varying envelope functions.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit

from .errors import GridTooCoarse

__all__ = [
    "PotentialModel",
    "AssumptionReport",
    "coulomb_symmetric",
    "anisotropic",
    "bump",
    "constant",
    "eval_potential",
    "derivatives",
    "certify_assumption",
    "sup_abs_v",
    "wkb_lambda_floor",
]


def bracket(x):
    """Smoothed absolute value <x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


# ----------------------------------------------------------------------
# model definition
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialModel:
    """One member of the supported potential families.

    kind is one of "coulomb", "anisotropic", "bump", "constant"; use the
    factory functions below rather than building instances by hand. mu is
    the decay rate of the envelope <x>^(-mu) and must stay in (0, 2) for
    the decaying families.
    """

    kind: str
    mu: float
    c: float = 1.0
    c_left: float = 1.0
    c_right: float = 1.0
    blend_width: float = 1.0
    bump_height: float = 0.0
    r0: float = 0.0
    derivative_order_max: int = 3

    @property
    def is_even(self) -> bool:
        return self.kind in ("coulomb", "bump", "constant")

    @property
    def core_radius(self) -> float:
        """Radius outside which strict negativity is guaranteed."""
        return self.r0 if self.kind == "bump" else 0.0

    def label(self) -> str:
        if self.kind == "coulomb":
            return f"coulomb(c={self.c:g}, mu={self.mu:g})"
        if self.kind == "anisotropic":
            return (f"anisotropic(c_left={self.c_left:g}, c_right={self.c_right:g}, "
                    f"w={self.blend_width:g}, mu={self.mu:g})")
        if self.kind == "bump":
            return (f"bump(c={self.c:g}, mu={self.mu:g}, "
                    f"height={self.bump_height:g}, r0={self.r0:g})")
        return f"constant(c={self.c:g})"


def _check_mu(mu):
    if not (0.0 < mu < 2.0):
        raise ValueError(f"mu must lie in (0, 2), got {mu}")


def coulomb_symmetric(c=1.0, mu=1.0) -> PotentialModel:
    """V(x) = -c <x>^(-mu)."""
    _check_mu(mu)
    if c <= 0:
        raise ValueError("c must be positive")
    return PotentialModel(kind="coulomb", mu=mu, c=c)


def anisotropic(c_left, c_right, blend_width=1.0, mu=1.0) -> PotentialModel:
    """Different strengths on the two half-lines, joined by a smooth sigmoid.

    V(x) = -(c_left + (c_right - c_left) * logistic(x / blend_width)) <x>^(-mu)
    """
    _check_mu(mu)
    if min(c_left, c_right) <= 0:
        raise ValueError("both strengths must be positive")
    if blend_width <= 0:
        raise ValueError("blend_width must be positive")
    return PotentialModel(kind="anisotropic", mu=mu, c_left=c_left,
                          c_right=c_right, blend_width=blend_width)


def bump(c=1.0, mu=1.0, bump_height=2.0, r0=2.0) -> PotentialModel:
    """Attractive base plus a compactly supported smooth bump on |x| < r0.

    The bump term is bump_height * exp(1 - 1/(1 - (x/r0)^2)) inside the core
    and identically zero outside, so V may change sign near the origin.
    """
    _check_mu(mu)
    if c <= 0 or r0 <= 0:
        raise ValueError("c and r0 must be positive")
    return PotentialModel(kind="bump", mu=mu, c=c, bump_height=bump_height, r0=r0)


def constant(c=1.0) -> PotentialModel:
    """V(x) = -c, a unit-test stub that bypasses the decay assumption."""
    if c <= 0:
        raise ValueError("c must be positive")
    return PotentialModel(kind="constant", mu=1.0, c=c)


# ----------------------------------------------------------------------
# closed-form derivatives
# ----------------------------------------------------------------------

def _powlaw_derivs(x, mu):
    """p(x) = <x>^(-mu) and derivatives through order 3."""
    m = 0.5 * mu
    r = 1.0 + x * x
    p0 = r ** (-m)
    p1 = -2.0 * m * x * r ** (-m - 1.0)
    p2 = -2.0 * m * (1.0 - (2.0 * m + 1.0) * x * x) * r ** (-m - 2.0)
    p3 = (4.0 * m * x * (3.0 * (m + 1.0)
          - (2.0 * m + 1.0) * (m + 1.0) * x * x) * r ** (-m - 3.0))
    return p0, p1, p2, p3


def _blend_derivs(x, c_left, c_right, w):
    """g(x) = c_left + (c_right - c_left) * logistic(x/w), through order 3."""
    s = expit(x / w)
    d = c_right - c_left
    sp = s * (1.0 - s)
    g0 = c_left + d * s
    g1 = d * sp / w
    g2 = d * sp * (1.0 - 2.0 * s) / w ** 2
    g3 = d * sp * (1.0 - 6.0 * s + 6.0 * s * s) / w ** 3
    return g0, g1, g2, g3


def _bump_derivs(x, height, r0):
    """Compactly supported bump term and derivatives through order 3."""
    u = x / r0
    shape = u.shape
    f = [np.zeros(shape) for _ in range(4)]
    inside = np.abs(u) < 1.0 - 1e-9
    ui = u[inside]
    one = 1.0 - ui * ui
    phi = np.exp(1.0 - 1.0 / one)
    psi1 = -2.0 * ui / one ** 2
    psi2 = -2.0 * (1.0 + 3.0 * ui * ui) / one ** 3
    psi3 = -24.0 * ui * (1.0 + ui * ui) / one ** 4
    f[0][inside] = phi
    f[1][inside] = psi1 * phi
    f[2][inside] = (psi2 + psi1 ** 2) * phi
    f[3][inside] = (psi3 + 3.0 * psi1 * psi2 + psi1 ** 3) * phi
    return tuple(height * fk / r0 ** k for k, fk in enumerate(f))


def derivatives(model: PotentialModel, x) -> Tuple[np.ndarray, ...]:
    """V, V', V'', V''' at x (broadcast over x)."""
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)

    if model.kind == "constant":
        z = np.zeros_like(xa)
        out = (-model.c + z, z, z.copy(), z.copy())
    elif model.kind == "coulomb":
        p = _powlaw_derivs(xa, model.mu)
        out = tuple(-model.c * pk for pk in p)
    elif model.kind == "anisotropic":
        p = _powlaw_derivs(xa, model.mu)
        g = _blend_derivs(xa, model.c_left, model.c_right, model.blend_width)
        # Leibniz rule for -(g * p)
        v0 = -(g[0] * p[0])
        v1 = -(g[1] * p[0] + g[0] * p[1])
        v2 = -(g[2] * p[0] + 2.0 * g[1] * p[1] + g[0] * p[2])
        v3 = -(g[3] * p[0] + 3.0 * g[2] * p[1] + 3.0 * g[1] * p[2] + g[0] * p[3])
        out = (v0, v1, v2, v3)
    elif model.kind == "bump":
        p = _powlaw_derivs(xa, model.mu)
        b = _bump_derivs(xa, model.bump_height, model.r0)
        out = tuple(-model.c * pk + bk for pk, bk in zip(p, b))
    else:
        raise ValueError(f"unknown profile kind {model.kind!r}")

    if scalar:
        return tuple(float(o[0]) for o in out)
    return out


def eval_potential(model: PotentialModel, x, order: int = 0):
    """Evaluate V or one of its derivatives (order <= derivative_order_max)."""
    if not (0 <= order <= model.derivative_order_max):
        raise ValueError(f"order must be in [0, {model.derivative_order_max}]")
    return derivatives(model, x)[order]


# ----------------------------------------------------------------------
# assumption certificate
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionReport:
    """Certified envelope constants for one potential model.

    c_alpha[k] bounds |d^k V| <x>^(mu + k); c_v1 and c_v2 sandwich
    (-V) <x>^mu from above and below on the negativity region
    |x| >= core_radius.
    """

    mu: float
    c_alpha: Tuple[float, ...]
    c_v1: float
    c_v2: float
    negativity_ok: bool
    core_radius: float
    grid_points: int


def _certification_grid(model, x_max, per_decade):
    dense = np.linspace(0.0, 4.0, 4 * per_decade + 1)
    tail = np.geomspace(4.0, x_max, int(np.ceil(np.log10(x_max / 4.0) * per_decade)) + 1)
    half = np.concatenate([dense, tail[1:]])
    if model.kind == "bump":
        # resolve the core walls where the bump derivatives peak
        core = model.r0 * np.linspace(-1.0, 1.0, 4 * per_decade + 1)
        half = np.concatenate([half, np.abs(core)])
    if model.kind == "anisotropic":
        blend = model.blend_width * np.linspace(-8.0, 8.0, 16 * per_decade + 1)
        half = np.concatenate([half, np.abs(blend)])
    grid = np.unique(np.concatenate([-half, half]))
    return grid


def _envelope_constants(model, grid):
    w = bracket(grid)
    derivs = derivatives(model, grid)
    c_alpha = tuple(float(np.max(np.abs(d) * w ** (model.mu + k)))
                    for k, d in enumerate(derivs))
    mask = np.abs(grid) >= model.core_radius
    neg = -derivs[0][mask] * w[mask] ** model.mu
    return c_alpha, float(np.max(neg)), float(np.min(neg))


def certify_assumption(model: PotentialModel, x_max: float = 1e6,
                       per_decade: int = 40) -> AssumptionReport:
    """Certify the decay envelope and strict negativity of a model.

    Constants are suprema over a dense symmetric grid reaching x_max.
    Raises GridTooCoarse when doubling the grid density moves any constant
    by more than 1%, which indicates the grid missed a feature.
    """
    if model.kind == "constant":
        raise ValueError("constant profile is a stub without a decay certificate")

    grid = _certification_grid(model, x_max, per_decade)
    c_alpha, c_v1, c_v2 = _envelope_constants(model, grid)

    fine = np.unique(np.concatenate([grid, 0.5 * (grid[:-1] + grid[1:])]))
    c_alpha_f, c_v1_f, c_v2_f = _envelope_constants(model, fine)
    worst = 0.0
    for a, b in zip(c_alpha + (c_v1, c_v2), c_alpha_f + (c_v1_f, c_v2_f)):
        scale = max(abs(a), abs(b), 1e-300)
        worst = max(worst, abs(a - b) / scale)
    if worst > 0.01:
        raise GridTooCoarse(
            f"certificate moved by {worst:.2%} under 2x refinement; "
            "increase per_decade")

    return AssumptionReport(
        mu=model.mu,
        c_alpha=c_alpha_f,
        c_v1=c_v1_f,
        c_v2=c_v2_f,
        negativity_ok=c_v2_f > 0.0,
        core_radius=model.core_radius,
        grid_points=len(fine),
    )


def sup_abs_v(model: PotentialModel) -> float:
    """Supremum of |V| over the line (attained near the origin)."""
    if model.kind == "constant":
        return model.c
    span = max(8.0, 2.0 * model.r0)
    x = np.linspace(-span, span, 4001)
    return float(np.max(np.abs(derivatives(model, x)[0])))


def wkb_lambda_floor(model: PotentialModel) -> float:
    """Smallest lambda with a globally valid single-phase WKB representation.

    Zero for everywhere-negative profiles. For bump profiles this is the
    usual threshold max(1, 2 sup|V|), above which lambda^2 - V is uniformly
    bounded away from zero on the whole line.
    """
    if model.kind == "bump" and model.bump_height > 0.0:
        return max(1.0, 2.0 * sup_abs_v(model))
    return 0.0
