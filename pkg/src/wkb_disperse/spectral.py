"""Spectral density of the continuous spectrum, assembled from Jost data.

The jump of the resolvent across the positive real axis, divided by
2 pi i and weighted by 2 lambda, is a real symmetric kernel in (x, x'):
the density that the propagator integrates against e^{-i t lambda^2}.
It is evaluated two ways. The direct route multiplies the two Jost
solutions and is valid at every lambda > 0, bump cores included. The
decomposed route splits the same product into four waves
b e^{i(s1 y(x) + s2 y(x'))} with slowly varying amplitudes, which is
what stationary-phase arguments consume; it exists only where a global
phase variable does.
"""

from dataclasses import dataclass

import numpy as np

from .errors import WkbUnavailable
from .jost import JostEngine, JostSolution, scattering_data
from .potential import eval_potential, wkb_lambda_floor

__all__ = [
    "SpectralDensityEvaluator",
    "WkbDecomposition",
    "density",
    "resolvent_kernel",
    "wkb_components",
]

SIGMA_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class WkbDecomposition:
    """Four-wave form of the density at fixed lambda.

    amplitude[(s1, s2)] carries the slow factor, phase[(s1, s2)] the
    fast one, so that sum over pairs of amplitude * e^{i phase} equals
    the direct density. Conjugate pairing amplitude[-s] = conj
    (amplitude[s]) makes the sum real; imag_defect reports the rounding
    left over.
    """

    lam: float
    amplitude: dict
    phase: dict

    def reconstruct(self):
        total = 0.0
        for key in SIGMA_PAIRS:
            total = total + self.amplitude[key] * np.exp(1j * self.phase[key])
        return np.real(total)

    def imag_defect(self):
        total = 0.0
        for key in SIGMA_PAIRS:
            total = total + self.amplitude[key] * np.exp(1j * self.phase[key])
        return float(np.max(np.abs(np.imag(np.atleast_1d(total)))))


class SpectralDensityEvaluator:
    """Density, resolvent, and wave decomposition at one wavenumber.

    One instance owns the Jost engine and the certified scattering data;
    evaluation methods take point arrays and share a single solve over
    the union of requested points (repeat calls on the same points hit a
    small cache instead of re-integrating).
    """

    def __init__(self, model, lam, tol=1e-8):
        self.model = model
        self.lam = float(lam)
        self.tol = tol
        self.engine = JostEngine(model, lam, tol)
        self.scattering = scattering_data(model, lam, tol)
        self._cache = {}

    # -- solution bookkeeping --------------------------------------------

    def _solutions(self, pts):
        """Plus and minus solutions sampled on a superset of pts."""
        if self.model.is_even:
            xs = np.unique(np.concatenate([pts, -pts]))
        else:
            xs = np.unique(pts)
        key = xs.tobytes()
        if key not in self._cache:
            plus = self.engine.solve(xs, direction=1)
            if self.model.is_even:
                order = np.argsort(-plus.x)
                minus = JostSolution(
                    lam=self.lam, direction=-1, x=-plus.x[order],
                    u=plus.u[order], du=-plus.du[order],
                    coeff_out=plus.coeff_in[order],
                    coeff_in=plus.coeff_out[order], y=-plus.y[order],
                    far_out=plus.far_in, far_in=plus.far_out,
                    tail_error=plus.tail_error, mode=plus.mode)
            else:
                minus = self.engine.solve(xs, direction=-1)
            if len(self._cache) >= 8:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = (plus, minus)
        return self._cache[key]

    @staticmethod
    def _take(sol, pts):
        idx = np.searchsorted(sol.x, pts)
        return idx

    def solutions(self, pts):
        """Plus and minus Jost solutions sampled on a superset of pts."""
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        return self._solutions(pts)

    # -- kernels -----------------------------------------------------------

    def resolvent_kernel(self, sign, x, xp):
        """Green kernel at energy lam^2 +/- i0.

        Outgoing: u_plus at the larger point, u_minus at the smaller,
        divided by their Wronskian. Incoming is its complex conjugate.
        """
        if sign not in ("outgoing", "incoming"):
            raise ValueError("sign must be 'outgoing' or 'incoming'")
        x, xp = np.broadcast_arrays(np.asarray(x, float), np.asarray(xp, float))
        scalar = x.ndim == 0
        x, xp = np.atleast_1d(x), np.atleast_1d(xp)
        hi, lo = np.maximum(x, xp), np.minimum(x, xp)
        plus, minus = self._solutions(np.concatenate([hi, lo]))
        g = (plus.u[self._take(plus, hi)] * minus.u[self._take(minus, lo)]
             / self.scattering.wronskian)
        if sign == "incoming":
            g = np.conj(g)
        return complex(g[0]) if scalar else g

    def density(self, x, xp):
        """The real kernel 2 lambda Im G(x, x'); symmetric in (x, x')."""
        g = self.resolvent_kernel("outgoing", x, xp)
        return (2.0 * self.lam / np.pi) * np.imag(g)

    def density_coincident_alt(self, x):
        """Same diagonal values through the |Wr|^-2 sum-of-squares form."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        plus, minus = self._solutions(x)
        up = plus.u[self._take(plus, x)]
        um = minus.u[self._take(minus, x)]
        wr2 = abs(self.scattering.wronskian) ** 2
        return (2.0 * self.lam / (np.pi * wr2)) * (np.abs(up) ** 2
                                                   + np.abs(um) ** 2)

    # -- wave decomposition ------------------------------------------------

    def wkb_components(self, x, xp) -> WkbDecomposition:
        """Split the density into four waves with slow amplitudes.

        Valid wherever one phase variable spans the line; bump profiles
        below their threshold have a classically forbidden core and no
        such variable, so they are refused rather than patched.
        """
        floor = wkb_lambda_floor(self.model)
        if self.lam < floor or self.engine.mode != "global":
            raise WkbUnavailable(
                f"no global phase at lam = {self.lam:g} "
                f"(threshold {floor:g} for this profile)")
        x, xp = np.broadcast_arrays(np.asarray(x, float), np.asarray(xp, float))
        x, xp = np.atleast_1d(x), np.atleast_1d(xp)
        plus, minus = self._solutions(np.concatenate([x, xp]))
        ix_p, ixp_p = self._take(plus, x), self._take(plus, xp)
        ix_m, ixp_m = self._take(minus, x), self._take(minus, xp)

        # the plus solution is evaluated at whichever point is larger
        swap = x < xp
        c1 = {1: np.where(swap, minus.coeff_out[ix_m], plus.coeff_out[ix_p]),
              -1: np.where(swap, minus.coeff_in[ix_m], plus.coeff_in[ix_p])}
        c2 = {1: np.where(swap, plus.coeff_out[ixp_p], minus.coeff_out[ixp_m]),
              -1: np.where(swap, plus.coeff_in[ixp_p], minus.coeff_in[ixp_m])}
        y1 = plus.y[ix_p]
        y2 = plus.y[ixp_p]

        qx = self.lam ** 2 - eval_potential(self.model, x)
        qxp = self.lam ** 2 - eval_potential(self.model, xp)
        pref = (self.lam / np.pi) * qx ** -0.25 * qxp ** -0.25
        raw = {(s1, s2): c1[s1] * c2[s2] / self.scattering.wronskian
               for s1, s2 in SIGMA_PAIRS}
        amp = {}
        phase = {}
        for s1, s2 in SIGMA_PAIRS:
            # 1/i folds the conjugate-resolvent difference into one sum
            amp[(s1, s2)] = -1j * pref * (raw[(s1, s2)]
                                          - np.conj(raw[(-s1, -s2)]))
            phase[(s1, s2)] = s1 * y1 + s2 * y2
        return WkbDecomposition(lam=self.lam, amplitude=amp, phase=phase)


# -- one-shot conveniences (CLI and tests; heavy users keep the evaluator) --

def resolvent_kernel(model, lam, sign, x, xp, tol=1e-8):
    return SpectralDensityEvaluator(model, lam, tol).resolvent_kernel(sign, x, xp)


def density(model, lam, x, xp, tol=1e-8):
    return SpectralDensityEvaluator(model, lam, tol).density(x, xp)


def wkb_components(model, lam, x, xp, tol=1e-8):
    return SpectralDensityEvaluator(model, lam, tol).wkb_components(x, xp)
