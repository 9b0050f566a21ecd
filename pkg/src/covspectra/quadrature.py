"""Adaptive composite Gauss-Legendre quadrature with a cumulative antiderivative.

The integrand is sampled at Gauss-Legendre nodes on each accepted panel;
the samples also define a Legendre interpolant per panel, so the running
integral can be evaluated at any point without further integrand calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import legendre as leg

ORDER = 16


@dataclass(frozen=True)
class PiecewiseIntegral:
    edges: np.ndarray  # panel boundaries, ascending, length P + 1
    coeffs: np.ndarray  # (ORDER, P) Legendre coefficients of the integrand on [-1, 1]
    cumulative: np.ndarray  # integral from edges[0] to edges[j], length P + 1

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])

    def __call__(self, t) -> np.ndarray:
        """Integral from ``edges[0]`` to ``t`` (clipped to the domain)."""
        t = np.clip(np.asarray(t, dtype=float), self.edges[0], self.edges[-1])
        flat = t.ravel()
        j = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, len(self.edges) - 2)
        lo, hi = self.edges[j], self.edges[j + 1]
        xi = 2.0 * (flat - lo) / (hi - lo) - 1.0
        anti = leg.legint(self.coeffs[:, j], lbnd=-1.0)
        part = leg.legval(xi, anti, tensor=False) * 0.5 * (hi - lo)
        return (self.cumulative[j] + part).reshape(t.shape)


def _nodes(order: int = ORDER) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = leg.leggauss(order)
    # discrete Legendre transform: c_k = (2k+1)/2 sum_j w_j P_k(x_j) y_j
    V = leg.legvander(x, order - 1)
    T = (V * w[:, None]).T * ((2 * np.arange(order) + 1) / 2.0)[:, None]
    return x, w, T


def adaptive_gauss_legendre(
    fn: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-8,
    initial_panels: int = 8,
    max_panels: int = 4096,
) -> PiecewiseIntegral:
    """Integrate a vectorised ``fn`` over ``[a, b]``.

    A panel is accepted when its one-panel estimate and the sum over its two
    halves agree to ``tol * width / (b - a) * max(1, |estimate|)``; the halves
    are kept as final panels.
    """
    if not b > a:
        raise ValueError("need b > a")
    x, w, T = _nodes()
    span = b - a

    def evaluate(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        pts = 0.5 * (hi - lo)[:, None] * (x[None, :] + 1.0) + lo[:, None]
        return np.asarray(fn(pts.ravel()), dtype=float).reshape(pts.shape)

    lo = np.linspace(a, b, initial_panels + 1)[:-1]
    hi = np.linspace(a, b, initial_panels + 1)[1:]
    vals = evaluate(lo, hi)
    est = 0.5 * (hi - lo) * (vals @ w)

    done_lo, done_hi, done_vals = [], [], []
    while len(lo):
        mid = 0.5 * (lo + hi)
        left = evaluate(lo, mid)
        right = evaluate(mid, hi)
        est_l = 0.5 * (mid - lo) * (left @ w)
        est_r = 0.5 * (hi - mid) * (right @ w)
        err = np.abs(est - (est_l + est_r))
        allowed = tol * (hi - lo) / span * np.maximum(1.0, np.abs(est))
        ok = err <= allowed
        n_done = sum(len(d) for d in done_lo) + 2 * int(ok.sum())
        if n_done + 4 * int((~ok).sum()) > max_panels:
            ok[:] = True  # budget exhausted: accept the refined halves as they are
        done_lo += [lo[ok], mid[ok]]
        done_hi += [mid[ok], hi[ok]]
        done_vals += [left[ok], right[ok]]
        bad = ~ok
        lo = np.concatenate([lo[bad], mid[bad]])
        hi = np.concatenate([mid[bad], hi[bad]])
        vals = np.concatenate([left[bad], right[bad]])
        est = np.concatenate([est_l[bad], est_r[bad]])

    plo = np.concatenate(done_lo)
    phi_ = np.concatenate(done_hi)
    pv = np.concatenate(done_vals)
    order = np.argsort(plo)
    plo, phi_, pv = plo[order], phi_[order], pv[order]
    panel_int = 0.5 * (phi_ - plo) * (pv @ w)
    coeffs = T @ pv.T
    edges = np.append(plo, phi_[-1])
    cumulative = np.concatenate([[0.0], np.cumsum(panel_int)])
    return PiecewiseIntegral(edges=edges, coeffs=coeffs, cumulative=cumulative)
