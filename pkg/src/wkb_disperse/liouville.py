"""Phase-variable change y(x, l) = int sqrt(l^2 - V) and its inverse.

The map straightens the classical flow: in the y variable the oscillation
has unit wavenumber and every amplitude correction decays like <y>^(-2).
All integrals run from a fixed anchor point (0 by default; engines that
anchor at a core edge pass their own), over Gauss-Legendre panels whose
nodes are shared across evaluation points, so the potential is sampled
once per table no matter how many (x, l) pairs are requested.
"""

import numpy as np

from .errors import TurningPoint
from .potential import eval_potential
from .quadrature import (cumulative_panels, edges_through, gauss_rule,
                         integrate_panels, panel_nodes, walk_edges)

_PAIR_CHUNK = 64


def _broadcast_pairs(x, lam):
    xb, lb = np.broadcast_arrays(np.asarray(x, dtype=float),
                                 np.asarray(lam, dtype=float))
    return xb.ravel(), lb.ravel(), xb.shape


class LiouvilleMap:
    """Forward and inverse phase map for one potential model.

    Parameters
    ----------
    model : PotentialModel
    anchor : float
        Base point of the phase integral; y(anchor, l) = 0 for every l.
    """

    def __init__(self, model, anchor=0.0):
        self.model = model
        self.anchor = float(anchor)

    # -- local quantities -------------------------------------------------

    def momentum_sq(self, x, lam):
        """q = l^2 - V(x), the squared local wavenumber."""
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return lam ** 2 - eval_potential(self.model, x)

    # -- shared panel machinery -------------------------------------------

    def _table(self, xs):
        """Panel table through the anchor and every requested point."""
        pts = np.unique(np.concatenate([np.atleast_1d(xs).ravel(),
                                        [self.anchor]]))
        edges = edges_through(pts)
        nodes, weights = panel_nodes(edges)
        v = eval_potential(self.model, nodes)
        return edges, nodes, weights, v

    def _paired_integral(self, x, lam, power):
        """int_anchor^x (l^2 - V)^power ds for broadcast (x, l) pairs.

        power = 0.5 is the phase itself; negative powers feed the symbol
        derivatives. Raises TurningPoint when l^2 - V <= 0 anywhere on a
        requested path.
        """
        xf, lf, shape = _broadcast_pairs(x, lam)
        out = np.empty(xf.shape)
        edges, nodes, weights, v = self._table(xf)
        m = len(edges) - 1
        ix = np.searchsorted(edges, xf)
        ia = np.searchsorted(edges, self.anchor)
        n = len(nodes) // max(m, 1)
        for lo in range(0, len(xf), _PAIR_CHUNK):
            hi = min(lo + _PAIR_CHUNK, len(xf))
            q = lf[lo:hi, None] ** 2 - v[None, :]
            bad = q <= 0.0
            if bad.any():
                # only paths that actually cross the bad nodes must fail
                cnt = np.zeros((hi - lo, m + 1))
                np.cumsum(bad.reshape(hi - lo, m, n).sum(axis=-1),
                          axis=-1, out=cnt[:, 1:])
                rows = np.arange(hi - lo)
                crossed = np.abs(cnt[rows, ix[lo:hi]] - cnt[rows, ia])
                if (crossed > 0).any():
                    k = int(np.argmax(crossed > 0)) + lo
                    raise TurningPoint(
                        f"l^2 - V <= 0 between {self.anchor:g} and "
                        f"{xf[k]:g} at l = {lf[k]:g}")
                q = np.maximum(q, 1e-300)
            cum = cumulative_panels(q ** power, edges, weights)
            rows = np.arange(hi - lo)
            out[lo:hi] = cum[rows, ix[lo:hi]] - cum[rows, ia]
        return out.reshape(shape)

    # -- the map -----------------------------------------------------------

    def forward(self, x, lam):
        """Phase y(x, l); x and l broadcast together."""
        if self.model.kind == "constant":
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return (x - self.anchor) * np.sqrt(lam ** 2 + self.model.c)
        out = self._paired_integral(x, lam, 0.5)
        return float(out) if out.ndim == 0 else out

    def inverse(self, y, lam, tol=1e-13):
        """Position x(y, l) solving forward(x, l) = y, by guarded Newton."""
        if self.model.kind == "constant":
            y = np.asarray(y, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return self.anchor + y / np.sqrt(lam ** 2 + self.model.c)

        yf, lf, shape = _broadcast_pairs(y, lam)
        q0 = lf ** 2 - eval_potential(self.model, self.anchor)
        if (q0 <= 0.0).any():
            k = int(np.argmax(q0 <= 0.0))
            raise TurningPoint(
                f"l^2 - V <= 0 at the anchor for l = {lf[k]:g}")

        if yf.size > 4 and np.all(lf == lf.flat[0]):
            out = self._inverse_shared(yf, float(lf.flat[0]), tol)
            out = out.reshape(shape)
            return float(out) if out.ndim == 0 else out

        xk = self.anchor + yf / np.sqrt(q0)
        r = self._paired_integral(xk, lf, 0.5) - yf
        # residual r is increasing in x, so signs give a hard bracket
        lo = np.where(r > 0, -np.inf, xk)
        hi = np.where(r > 0, xk, np.inf)
        for _ in range(60):
            qk = lf ** 2 - eval_potential(self.model, xk)
            step = -r / np.sqrt(np.maximum(qk, 1e-300))
            # trust region keeps the incremental quadrature accurate
            cap = 2.0 * np.abs(xk - self.anchor) + 10.0
            step = np.clip(step, -cap, cap)
            xn = xk + step
            mid = np.isfinite(lo) & np.isfinite(hi)
            outside = mid & ((xn <= lo) | (xn >= hi))
            xn[outside] = 0.5 * (lo[outside] + hi[outside])
            r = r + self._increment(xk, xn, lf)
            xk = xn
            lo = np.where(r > 0, lo, np.maximum(lo, xk))
            hi = np.where(r > 0, np.minimum(hi, xk), hi)
            if np.all(np.abs(r) <= tol * np.sqrt(np.maximum(qk, 1.0))
                      * (1.0 + np.abs(yf))):
                break
        out = xk.reshape(shape)
        return float(out) if out.ndim == 0 else out

    def _inverse_shared(self, ys, lam, tol):
        """Inverse for one shared wavenumber.

        A forward table over walk panels brackets every target at once, so
        the cost is one potential sweep plus a handful of single-panel
        Newton polishes, independent of how many targets there are.
        """
        pieces = [np.array([self.anchor])]
        for sgn in (-1.0, 1.0):
            need = float(ys.min()) if sgn < 0 else float(ys.max())
            if sgn * need <= 0.0:
                continue
            # q >= l^2 away from any barrier, so |x| <~ |y| / l out there
            span = max(16.0, 1.25 * sgn * need / lam)
            while True:
                e = walk_edges(self.anchor, self.anchor + sgn * span)
                reach = integrate_panels(
                    lambda s: np.sqrt(np.maximum(
                        lam ** 2 - eval_potential(self.model, s), 0.0)), e)
                if sgn * reach >= sgn * need:
                    break
                if span > 1e15:
                    raise TurningPoint(
                        f"phase {need:g} unreachable at l = {lam:g}")
                span *= 2.0
            pieces.append(e[1:])
        grid = np.unique(np.concatenate(pieces))
        nodes, weights = panel_nodes(grid)
        q = lam ** 2 - eval_potential(self.model, nodes)
        bad = q <= 0.0
        y_grid = cumulative_panels(np.sqrt(np.where(bad, 1e-300, q)),
                                   grid, weights)
        ia = int(np.searchsorted(grid, self.anchor))
        y_grid = y_grid - y_grid[ia]
        k = np.clip(np.searchsorted(y_grid, ys) - 1, 0, len(grid) - 2)
        if bad.any():
            per = bad.reshape(len(grid) - 1, -1).any(axis=-1)
            cnt = np.concatenate([[0], np.cumsum(per)])
            crossed = np.abs(cnt[np.where(ys >= 0, k + 1, k)] - cnt[ia]) > 0
            if crossed.any():
                j = int(np.argmax(crossed))
                raise TurningPoint(
                    f"l^2 - V <= 0 between {self.anchor:g} and the point "
                    f"with phase {ys[j]:g} at l = {lam:g}")
        gx, gw = gauss_rule(12)
        qk = np.maximum(lam ** 2 - eval_potential(self.model, grid[k]),
                        1e-300)
        xk = grid[k] + (ys - y_grid[k]) / np.sqrt(qk)
        for _ in range(12):
            # fresh single-panel residual each pass, no drift to accumulate
            half = 0.5 * (xk - grid[k])
            mid = grid[k] + half
            qn = lam ** 2 - eval_potential(
                self.model, mid[:, None] + half[:, None] * gx[None, :])
            r = y_grid[k] + (np.sqrt(np.maximum(qn, 1e-300)) @ gw) * half - ys
            qx = np.maximum(lam ** 2 - eval_potential(self.model, xk),
                            1e-300)
            xk = xk - r / np.sqrt(qx)
            if np.all(np.abs(r) <= tol * (1.0 + np.abs(ys))):
                break
        return xk

    def _increment(self, xa, xb, lf):
        """int_xa^xb sqrt(l^2 - V) per pair, on a fixed 4-panel split."""
        t = np.linspace(0.0, 1.0, 5)
        edges = xa[:, None] + (xb - xa)[:, None] * t[None, :]
        gx, gw = gauss_rule(12)
        half = 0.5 * np.diff(edges, axis=-1)
        mid = 0.5 * (edges[:, :-1] + edges[:, 1:])
        nodes = mid[..., None] + half[..., None] * gx
        q = lf[:, None, None] ** 2 - eval_potential(self.model, nodes)
        if (q <= 0.0).any():
            k = int(np.argmax((q <= 0.0).any(axis=(1, 2))))
            raise TurningPoint(
                f"l^2 - V <= 0 near x = {xb[k]:g} at l = {lf[k]:g}")
        return (np.sqrt(q) * (half[..., None] * gw)).sum(axis=(1, 2))

    # -- symbol derivatives -------------------------------------------------

    def dy_dlam(self, x, lam):
        """d y / d l at fixed x, equal to l * int q^(-1/2)."""
        lam_arr = np.asarray(lam, dtype=float)
        out = lam_arr * self._paired_integral(x, lam, -0.5)
        return float(out) if out.ndim == 0 else out

    def dx_dlam(self, x, lam):
        """d x / d l at fixed phase y, for the point x = x(y, l)."""
        q = self.momentum_sq(x, lam)
        if self.model.kind == "constant":
            x = np.asarray(x, dtype=float)
            lam = np.asarray(lam, dtype=float)
            return -(x - self.anchor) * lam / q
        return -self.dy_dlam(x, lam) / np.sqrt(q)


def symbol_derivative_gap(lmap, ys, lam, h=None):
    """Max relative gap between analytic dx/dl at fixed y and a centered
    finite difference of the inverse map. A small gap certifies that
    positions respond smoothly to the spectral parameter, which is what
    makes coarse spectral tables interpolable."""
    lam = float(lam)
    if h is None:
        h = max(1e-4 * lam, 1e-8)
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    xs = lmap.inverse(ys, lam)
    fd = (lmap.inverse(ys, lam + h) - lmap.inverse(ys, lam - h)) / (2 * h)
    an = lmap.dx_dlam(xs, lam)
    scale = np.maximum(np.abs(an), 1e-12)
    return float(np.max(np.abs(fd - an) / scale))
