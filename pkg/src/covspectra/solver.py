"""Self-consistent equations for the deterministic Stieltjes transforms.

Three unknowns are related by

    m1 = -(1 - phi) / z + phi * m0,        m1o(z_o) = phi**(-1/2) * m1(z),   z_o = phi**(1/2) * z,

and ``m1o`` is the unique root in C+ of ``f(m) = z_o`` with

    f(x) = -1/x + phi * sum_i w_i / (x + 1/sigma_i).

The centred law uses the pair ``(m, g)`` of the theta-system, solved in
``g`` alone (see :func:`solve_general`).

Every solve is vectorised over ``z`` and follows the same recipe: start at a
large imaginary part where the transform is close to its ``-1/z``
asymptote, then walk the imaginary part down geometrically, polishing with
Newton at each stage.  A Newton step that would leave C+ or fails to reduce
the residual is halved; if halving does not help, a damped fixed-point step
(which maps C+ into itself) is taken instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import LeftUpperHalfPlane, NoConvergence, PoleEvaluation
from .spectrum import PopulationSpectrum, SpectralPoint

POLE_BAND = 1e-14


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iter: int = 200
    damping: float = 0.5
    continuation_steps: int = 40

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be >= 1")


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class StieltjesSolution:
    """Solution of the self-consistent equations at one point (or an array of points).

    All transform fields are on the rescaled scale except ``m1o``.
    """

    z: complex | np.ndarray
    m0: complex | np.ndarray
    m1: complex | np.ndarray
    m1o: complex | np.ndarray
    g: complex | np.ndarray | None
    residual: float
    iterations: int


def _as_array(z) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(z) == 0
    return np.atleast_1d(np.asarray(z, dtype=complex)).copy(), scalar


def _out(a: np.ndarray, scalar: bool):
    return complex(a[0]) if scalar else a


def _point_value(z, scale: str):
    if isinstance(z, SpectralPoint):
        if z.scale != scale:
            raise ValueError(f"expected a point on the {scale} scale, got {z.scale}")
        return z.z
    return z


# ---------------------------------------------------------------------------
# the edge function f and its derivatives

def _f_parts(x: np.ndarray, pi: PopulationSpectrum, check: bool = True) -> np.ndarray:
    c = 1.0 / pi.values
    d = x[..., None] + c
    if check and (np.any(np.abs(x) < POLE_BAND) or np.any(np.abs(d) < POLE_BAND)):
        raise PoleEvaluation("f evaluated within 1e-14 of a pole")
    return d


def f_eval(x, pi: PopulationSpectrum, phi: float):
    """``f(x) = -1/x + phi * sum_i w_i / (x + 1/sigma_i)``; vectorised."""
    xa = np.asarray(x)
    d = _f_parts(xa, pi)
    out = -1.0 / xa + phi * np.sum(pi.weights / d, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


def f_prime_eval(x, pi: PopulationSpectrum, phi: float):
    xa = np.asarray(x)
    d = _f_parts(xa, pi)
    out = 1.0 / xa**2 - phi * np.sum(pi.weights / d**2, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


def f_second_eval(x, pi: PopulationSpectrum, phi: float):
    xa = np.asarray(x)
    d = _f_parts(xa, pi)
    out = -2.0 / xa**3 + 2.0 * phi * np.sum(pi.weights / d**3, axis=-1)
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# generic continuation machinery

Residual = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _newton_stage(
    z: np.ndarray,
    m: np.ndarray,
    residual: Residual,
    jacobian: Residual,
    fixed_point: Residual,
    cfg: SolverConfig,
    what: str,
    polish: bool = False,
) -> tuple[np.ndarray, np.ndarray, int]:
    tol = cfg.tol * np.maximum(1.0, np.abs(z))
    r = residual(m, z)
    active = ~(np.abs(r) <= tol)
    it = 0
    while active.any():
        if it >= cfg.max_iter:
            worst = float(np.max(np.abs(r[active]) / tol[active]))
            raise NoConvergence(
                f"{what}: {int(active.sum())} point(s) above tolerance after {cfg.max_iter} "
                f"iterations (worst residual/tol = {worst:.3g})"
            )
        it += 1
        idx = np.flatnonzero(active)
        ma, za, ra = m[idx], z[idx], r[idx]
        step = ra / jacobian(ma, za)
        lam = np.ones(len(idx))
        new = ma - step
        with np.errstate(all="ignore"):
            rn = residual(new, za)
        bad = ~(new.imag > 0) | ~np.isfinite(rn) | ~(np.abs(rn) < np.abs(ra))
        for _ in range(30):
            if not bad.any():
                break
            b = np.flatnonzero(bad)
            lam[b] *= 0.5
            new[b] = ma[b] - lam[b] * step[b]
            with np.errstate(all="ignore"):
                rn[b] = residual(new[b], za[b])
            bad[b] = ~(new[b].imag > 0) | ~np.isfinite(rn[b]) | ~(np.abs(rn[b]) < np.abs(ra[b]))
        if bad.any():
            b = np.flatnonzero(bad)
            cand = (1.0 - cfg.damping) * ma[b] + cfg.damping * fixed_point(ma[b], za[b])
            if not np.all(cand.imag > 0):
                raise LeftUpperHalfPlane(f"{what}: damped fixed-point step left C+")
            new[b] = cand
            rn[b] = residual(cand, za[b])
        m[idx] = new
        r[idx] = rn
        active = ~(np.abs(r) <= tol)
    if polish:
        # one extra Newton step, kept only where it helps
        with np.errstate(all="ignore"):
            new = m - r / jacobian(m, z)
            rn = residual(new, z)
        ok = (new.imag > 0) & np.isfinite(rn) & (np.abs(rn) <= np.abs(r))
        m = np.where(ok, new, m)
        r = np.where(ok, rn, r)
    return m, r, it


def _continuation(
    z: np.ndarray,
    start: Callable[[np.ndarray], np.ndarray],
    eta_start: float,
    residual: Residual,
    jacobian: Residual,
    fixed_point: Residual,
    cfg: SolverConfig,
    what: str,
) -> tuple[np.ndarray, np.ndarray, int]:
    eta = z.imag
    if not np.all(eta > 0):
        raise ValueError(f"{what}: spectral parameter must have positive imaginary part")
    eta0 = np.maximum(eta, eta_start)
    m = start(z.real + 1j * eta0)
    total = 0
    n = cfg.continuation_steps
    for k in range(n + 1):
        zk = z.real + 1j * eta0 * (eta / eta0) ** (k / n)
        if k == n:
            zk = z
        m, r, it = _newton_stage(zk, m, residual, jacobian, fixed_point, cfg, what, polish=(k == n))
        total += it
    return m, r, total


# ---------------------------------------------------------------------------
# m1o on the o-scale

def _m1o_eta_start(pi: PopulationSpectrum, phi: float) -> float:
    return 10.0 * (1.0 + phi) * max(1.0, float(pi.values[0]))


def _solve_m1o(z_o: np.ndarray, pi: PopulationSpectrum, phi: float, cfg: SolverConfig):
    c = 1.0 / pi.values
    w = pi.weights

    def residual(m, z):
        return -1.0 / m + phi * np.sum(w / (m[:, None] + c), axis=1) - z

    def jacobian(m, z):
        return 1.0 / m**2 - phi * np.sum(w / (m[:, None] + c) ** 2, axis=1)

    def fixed_point(m, z):
        # m <- -1 / (z - phi * int x / (1 + m x) dpi)
        return -1.0 / (z - phi * np.sum(w * pi.values / (1.0 + m[:, None] * pi.values), axis=1))

    return _continuation(
        z_o, lambda zz: -1.0 / zz, _m1o_eta_start(pi, phi), residual, jacobian, fixed_point, cfg, "solve_m1o"
    )


def solve_m1o(z_o, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG):
    """Root of ``f(m) = z_o`` in C+ (the o-scale companion transform).

    ``z_o`` may be a complex number, an array, or an o-scale
    :class:`SpectralPoint`.  Returns a complex scalar or an array of the
    same shape.
    """
    if not phi > 0:
        raise ValueError("phi must be positive")
    z, scalar = _as_array(_point_value(z_o, "o_scale"))
    shape = np.shape(_point_value(z_o, "o_scale"))
    m, _, _ = _solve_m1o(z.ravel(), pi, phi, cfg)
    return complex(m[0]) if scalar else m.reshape(shape)


def eqm2_residual(m0, z, pi: PopulationSpectrum, phi: float):
    """``|m - int dpi(x) / (x (phi^-1/2 - phi^1/2 - phi^1/2 z m) - z)|``."""
    m0 = np.asarray(m0, dtype=complex)
    z = np.asarray(z, dtype=complex)
    s = math.sqrt(phi)
    a = (1.0 / s - s - s * z * m0)[..., None]
    rhs = np.sum(pi.weights / (pi.values * a - z[..., None]), axis=-1)
    return np.abs(m0 - rhs)


def eqm1_residual(m1, z, pi: PopulationSpectrum, phi: float):
    """``|1/m1 + z - phi^1/2 int x / (1 + phi^-1/2 m1 x) dpi|``."""
    m1 = np.asarray(m1, dtype=complex)
    z = np.asarray(z, dtype=complex)
    s = math.sqrt(phi)
    rhs = -z + s * np.sum(pi.weights * pi.values / (1.0 + m1[..., None] * pi.values / s), axis=-1)
    return np.abs(1.0 / m1 - rhs)


def solve_m1(z, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG) -> StieltjesSolution:
    """Solve for ``m0``, ``m1`` and ``m1o`` at rescaled ``z`` (scalar, array or point)."""
    if not phi > 0:
        raise ValueError("phi must be positive")
    zv = _point_value(z, "rescaled")
    za, scalar = _as_array(zv)
    shape = np.shape(zv)
    za = za.ravel()
    s = math.sqrt(phi)
    m1o, _, iters = _solve_m1o(s * za, pi, phi, cfg)
    m1 = s * m1o
    m0 = (m1 + (1.0 - phi) / za) / phi
    res = eqm2_residual(m0, za, pi, phi) / np.maximum(1.0, np.abs(za))
    worst = float(np.max(res))

    def pack(a):
        return complex(a[0]) if scalar else a.reshape(shape)

    return StieltjesSolution(
        z=pack(za), m0=pack(m0), m1=pack(m1), m1o=pack(m1o), g=None, residual=worst, iterations=iters
    )


# ---------------------------------------------------------------------------
# unified theta-system

def _h(g: np.ndarray, s: float, theta: int) -> np.ndarray:
    # h(g) = phi^-1/2 [ (1 + phi^1/2 g)^-1 - theta ], written without cancellation
    if theta == 1:
        return -g / (1.0 + s * g)
    return (1.0 / s) / (1.0 + s * g)


def general_residuals(m, g, z, pi: PopulationSpectrum, phi: float, theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Absolute residuals of both equations of the theta-system."""
    m = np.asarray(m, dtype=complex)
    g = np.asarray(g, dtype=complex)
    z = np.asarray(z, dtype=complex)
    h = _h(g, math.sqrt(phi), theta)
    r1 = np.abs(1.0 + z * m - g * h)
    r2 = np.abs(g - np.sum(pi.weights * pi.values / (pi.values * h[..., None] - z[..., None]), axis=-1))
    return r1, r2


def solve_general(z, pi: PopulationSpectrum, phi: float, theta: int, cfg: SolverConfig = DEFAULT_CONFIG):
    """Solve the theta-system for ``(m_b, g)`` at rescaled ``z``.

    ``theta = 0`` reproduces ``m0``; ``theta = 1`` gives the law of the
    centred matrix.  With ``theta = 1`` the value ``phi = 0`` is allowed and
    yields the generalised semicircle system ``1 + z m + g**2 = 0``.
    """
    if theta not in (0, 1):
        raise ValueError("theta must be 0 or 1")
    if phi < 0 or (theta == 0 and phi == 0):
        raise ValueError("phi must be positive (or zero with theta = 1)")
    zv = _point_value(z, "rescaled")
    za, scalar = _as_array(zv)
    shape = np.shape(zv)
    za = za.ravel()
    s = math.sqrt(phi)
    x = pi.values
    w = pi.weights
    mean = pi.moment(1)

    def residual(g, z):
        h = _h(g, s, theta)
        return g - np.sum(w * x / (x * h[:, None] - z[:, None]), axis=1)

    def jacobian(g, z):
        h = _h(g, s, theta)
        dh = -1.0 / (1.0 + s * g) ** 2
        return 1.0 + dh * np.sum(w * x**2 / (x * h[:, None] - z[:, None]) ** 2, axis=1)

    def fixed_point(g, z):
        h = _h(g, s, theta)
        return np.sum(w * x / (x * h[:, None] - z[:, None]), axis=1)

    sigma_max = max(1.0, float(x[0]))
    spread = 1.0 + s + (0.0 if theta == 1 else 1.0 / s)
    eta_start = 10.0 * sigma_max * spread
    g, _, _ = _continuation(za, lambda zz: -mean / zz, eta_start, residual, jacobian, fixed_point, cfg, "solve_general")
    h = _h(g, s, theta)
    m = np.sum(w / (x * h[:, None] - za[:, None]), axis=1)
    if scalar:
        return complex(m[0]), complex(g[0])
    return m.reshape(shape), g.reshape(shape)


def stability_margin(m1, pi: PopulationSpectrum) -> float:
    """``min_i |1 + m1 * sigma_i|``, a diagnostic for the physical branch."""
    m1 = np.atleast_1d(np.asarray(m1, dtype=complex))
    return float(np.min(np.abs(1.0 + m1[:, None] * pi.values)))
