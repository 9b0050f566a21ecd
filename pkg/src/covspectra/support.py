"""Support, density and classical eigenvalue locations of the limiting law.

Edges come from the critical points of ``f`` (see :mod:`covspectra.solver`):
the critical values, sorted in decreasing order, pair up into bulk
components ``[L_k, R_k]`` on the o-scale.  Densities are obtained by
Stieltjes inversion from slightly above the real axis.

Two normalisations of the limiting measure appear:

* ``rho`` -- the M-normalised limit of the ``M x M`` matrix, with an atom of
  mass ``max(0, 1 - 1/phi)`` at zero;
* ``rho_W`` -- the N-normalised limit of the ``N x N`` companion matrix,
  ``phi * rho`` on ``(0, inf)`` plus an atom of mass ``max(0, 1 - phi)`` at 0.

Classical locations and rigidity use ``rho_W``, so that the bulk holds
exactly ``K = min(M, N)`` eigenvalues.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import DegenerateInterval, MassMismatch, OddCriticalCount, SupportError
from .quadrature import PiecewiseIntegral, adaptive_gauss_legendre
from .solver import DEFAULT_CONFIG, SolverConfig, f_eval, solve_m1, solve_m1o
from .spectrum import Dimensions, PopulationSpectrum, SpectralPoint

SCAN_POINTS = 4096
MERGE_GAP = 1e-9
QUAD_TOL = 1e-8
PHI_ONE_TOL = 1e-12


# ---------------------------------------------------------------------------
# critical points of f

def _fp(x, c: np.ndarray, w: np.ndarray, phi: float):
    x = np.asarray(x, dtype=float)
    return 1.0 / x**2 - phi * np.sum(w / (x[..., None] + c) ** 2, axis=-1)


def _fp_scale(x: float, c: np.ndarray, w: np.ndarray, phi: float) -> float:
    return 1.0 / x**2 + phi * float(np.sum(w / (x + c) ** 2))


def _roots_on_grid(xs: np.ndarray, c, w, phi, tangent_check: bool) -> list[float]:
    vals = _fp(xs, c, w, phi)
    fp = lambda t: float(_fp(t, c, w, phi))
    roots = []
    sign = np.sign(vals)
    for j in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        roots.append(brentq(fp, xs[j], xs[j + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
    for j in np.flatnonzero(vals == 0.0):
        roots.append(float(xs[j]))
    if not roots and tangent_check:
        # two nearby roots can hide between grid points: refine the largest value
        j = int(np.argmax(vals))
        lo, hi = xs[max(j - 1, 0)], xs[min(j + 1, len(xs) - 1)]
        res = minimize_scalar(lambda t: -fp(t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-15 * max(1.0, abs(xs[j]))})
        if -res.fun >= 0.0:
            xm = float(res.x)
            if -res.fun == 0.0:
                roots += [xm, xm]
            else:
                roots.append(brentq(fp, lo, xm, xtol=1e-300, rtol=4 * np.finfo(float).eps))
                roots.append(brentq(fp, xm, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps))
    return roots


def _interval_grid(a: float, b: float) -> np.ndarray:
    t = np.geomspace(1e-12, 0.5, SCAN_POINTS // 2)
    t = np.concatenate([t, 1.0 - t[::-1][1:]])
    return a + (b - a) * t


def critical_points(pi: PopulationSpectrum, phi: float) -> list[float]:
    """Real roots of ``f'``, in decreasing order.

    When ``phi == 1`` the critical point outside the poles sits at infinity
    and is returned as ``math.inf`` (its critical value is 0).
    """
    if not phi > 0:
        raise ValueError("phi must be positive")
    c = 1.0 / pi.values  # ascending
    w = pi.weights
    poles = -c  # descending: poles[0] is closest to 0
    roots: list[float] = []

    bounds = [(poles[0], 0.0)] + [(poles[i], poles[i - 1]) for i in range(1, len(poles))]
    for i, (a, b) in enumerate(bounds):
        if b - a < 1e-13:
            raise DegenerateInterval(f"interval ({a}, {b}) has width below 1e-13")
        found = _roots_on_grid(_interval_grid(a, b), c, w, phi, tangent_check=(i > 0))
        roots += found

    # the unbounded interval I_0
    if abs(phi - 1.0) <= PHI_ONE_TOL:
        roots.append(math.inf)
    else:
        scale = float(c[0])
        pos = np.geomspace(1e-12, 1e12, SCAN_POINTS) * scale
        roots += _roots_on_grid(pos, c, w, phi, tangent_check=False)
        neg = poles[-1] - np.geomspace(1e-12, 1e12, SCAN_POINTS) * float(c[-1])
        roots += _roots_on_grid(neg[::-1], c, w, phi, tangent_check=False)

    for x in roots:
        if math.isfinite(x):
            if abs(float(_fp(x, c, w, phi))) > 1e-10 * _fp_scale(x, c, w, phi):
                raise SupportError(f"critical point {x} failed the f' check")
    return sorted(roots, reverse=True)


# ---------------------------------------------------------------------------
# support map

@dataclass(frozen=True)
class BulkComponent:
    k: int
    x_right: float
    x_left: float
    R_k: float
    L_k: float
    R_k_rescaled: float
    L_k_rescaled: float
    mass_w: float  # rho_W mass of the component
    N_k: int | None = None

    @property
    def edges_rescaled(self) -> tuple[float, float]:
        return self.L_k_rescaled, self.R_k_rescaled


@dataclass(frozen=True)
class ComponentCDF:
    """``mass_above(E) = int_E^R rho_W`` on one component (rescaled scale)."""

    L: float
    R: float
    mid: float
    right: PiecewiseIntegral  # in u = sqrt(R - E), u from 0 to sqrt(R - mid)
    left: PiecewiseIntegral  # in v = sqrt(E - L), v from 0 to sqrt(mid - L)

    @property
    def total(self) -> float:
        return self.right.total + self.left.total

    def mass_above(self, E) -> np.ndarray:
        E = np.clip(np.asarray(E, dtype=float), self.L, self.R)
        upper = self.right(np.sqrt(np.maximum(self.R - E, 0.0)))
        lower = self.right.total + self.left.total - self.left(np.sqrt(np.maximum(E - self.L, 0.0)))
        return np.where(E >= self.mid, upper, lower)


@dataclass(frozen=True)
class SupportMap:
    components: tuple[BulkComponent, ...]
    critical: tuple[float, ...]
    phi: float
    zero_mass: float
    cdfs: tuple[ComponentCDF, ...] = field(repr=False, compare=False)

    @property
    def p(self) -> int:
        return len(self.components)

    @property
    def rightmost_edge(self) -> float:
        return self.components[0].R_k_rescaled

    @property
    def edges_rescaled(self) -> np.ndarray:
        return np.array([e for c in self.components for e in (c.L_k_rescaled, c.R_k_rescaled)])

    @property
    def zero_mass_w(self) -> float:
        """Atom at zero of ``rho_W``."""
        return max(0.0, 1.0 - self.phi)

    def inside(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        out = np.zeros(E.shape, dtype=bool)
        for c in self.components:
            out |= (E >= c.L_k_rescaled) & (E <= c.R_k_rescaled)
        return out

    def kappa(self, E) -> np.ndarray:
        """Distance to the nearest edge of the support (rescaled scale)."""
        E = np.asarray(E, dtype=float)
        return np.min(np.abs(E[..., None] - self.edges_rescaled), axis=-1)

    def cdf_w(self, x, left_limit: bool = False) -> np.ndarray:
        """CDF of ``rho_W``; ``left_limit`` excludes the atom at exactly 0."""
        x = np.asarray(x, dtype=float)
        atom = (x > 0) if left_limit else (x >= 0)
        out = self.zero_mass_w * atom.astype(float)
        for cdf in self.cdfs:
            out = out + (cdf.total - cdf.mass_above(x)) * (x >= cdf.L)
        return out


def _eta_pair(E: np.ndarray, phi: float) -> np.ndarray:
    s = 1.0 + phi ** -0.5
    # near the hard edge at 0 the resolution must stay well below E
    return 1e-5 * s * np.clip(np.abs(E) / s, 1e-6, 1.0)


def _density_w_raw(E: np.ndarray, pi: PopulationSpectrum, phi: float, cfg: SolverConfig) -> np.ndarray:
    """``(1/pi) Im m1(E + i0)`` by two-point Richardson; no band test."""
    E = np.asarray(E, dtype=float)
    eta = _eta_pair(E, phi)
    z = np.concatenate([E + 1j * eta, E + 2j * eta])
    s = math.sqrt(phi)
    m1 = s * solve_m1o(s * z, pi, phi, cfg)
    n = len(E)
    im = 2.0 * m1[:n].imag - m1[n:].imag
    return np.maximum(im, 0.0) / math.pi


def _component_cdf(L: float, R: float, pi, phi, cfg) -> ComponentCDF:
    mid = 0.5 * (L + R)

    def right_fn(u):
        return 2.0 * u * _density_w_raw(R - u**2, pi, phi, cfg)

    def left_fn(v):
        return 2.0 * v * _density_w_raw(L + v**2, pi, phi, cfg)

    right = adaptive_gauss_legendre(right_fn, 0.0, math.sqrt(R - mid), tol=QUAD_TOL)
    left = adaptive_gauss_legendre(left_fn, 0.0, math.sqrt(mid - L), tol=QUAD_TOL)
    return ComponentCDF(L=L, R=R, mid=mid, right=right, left=left)


@lru_cache(maxsize=64)
def _support_map_cached(pi: PopulationSpectrum, phi: float, cfg: SolverConfig) -> SupportMap:
    xs = critical_points(pi, phi)
    if len(xs) % 2:
        raise OddCriticalCount(f"found {len(xs)} critical points; root finder missed one")
    vals = [0.0 if math.isinf(x) else float(f_eval(x, pi, phi)) for x in xs]
    order = sorted(range(len(xs)), key=lambda i: -vals[i])
    xs = [xs[i] for i in order]
    vals = [vals[i] for i in order]

    comps: list[list[float]] = []  # [x_right, x_left, R, L]
    for j in range(0, len(xs), 2):
        R, L = vals[j], max(vals[j + 1], 0.0)
        if comps and comps[-1][3] - R < MERGE_GAP:
            comps[-1][1] = xs[j + 1]
            comps[-1][3] = min(comps[-1][3], L)
        else:
            comps.append([xs[j], xs[j + 1], R, L])

    s = math.sqrt(phi)
    out, cdfs = [], []
    for k, (xr, xl, R, L) in enumerate(comps, start=1):
        Rr, Lr = R / s, L / s
        cdf = _component_cdf(Lr, Rr, pi, phi, cfg)
        cdfs.append(cdf)
        out.append(BulkComponent(k, xr, xl, R, L, Rr, Lr, mass_w=cdf.total))
    return SupportMap(
        components=tuple(out), critical=tuple(xs), phi=phi, zero_mass=max(0.0, 1.0 - 1.0 / phi), cdfs=tuple(cdfs)
    )


def support_map(pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG) -> SupportMap:
    """Bulk components of the limiting law, sorted by decreasing right edge."""
    return _support_map_cached(pi, float(phi), cfg)


# ---------------------------------------------------------------------------
# density

def density(E, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG, support: SupportMap | None = None):
    """M-normalised limiting density ``rho(E)`` on the rescaled scale.

    ``(1/pi) Im m0(E + i eta)`` extrapolated to ``eta = 0`` from
    ``eta = 1e-5 s`` and ``2e-5 s`` with ``s = 1 + phi**(-1/2)``; the
    resolution shrinks proportionally when ``|E| < s`` (hard edge at 0).
    Exactly 0 outside the bulk components.
    """
    sm = support if support is not None else support_map(pi, phi, cfg)
    Ea = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.zeros(Ea.shape)
    inside = sm.inside(Ea)
    if inside.any():
        Ei = Ea[inside]
        eta = _eta_pair(Ei, phi)
        z = np.concatenate([Ei + 1j * eta, Ei + 2j * eta])
        m0 = solve_m1(z, pi, phi, cfg).m0
        n = len(Ei)
        out[inside] = np.maximum(2.0 * m0[:n].imag - m0[n:].imag, 0.0) / math.pi
    return float(out[0]) if np.ndim(E) == 0 else out


def density_w(E, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG, support: SupportMap | None = None):
    """Continuous part of ``rho_W`` (equal to ``phi * rho`` off zero)."""
    sm = support if support is not None else support_map(pi, phi, cfg)
    Ea = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.zeros(Ea.shape)
    inside = sm.inside(Ea)
    if inside.any():
        out[inside] = _density_w_raw(Ea[inside], pi, phi, cfg)
    return float(out[0]) if np.ndim(E) == 0 else out


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    eta_eps: float

    def to_csv(self, path: str | Path, header: str | None = None) -> None:
        write_csv(path, ["E", "rho"], zip(self.grid, self.values), header)


def density_curve(grid, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG) -> DensityCurve:
    grid = np.sort(np.asarray(grid, dtype=float))
    return DensityCurve(grid, np.asarray(density(grid, pi, phi, cfg)), 1e-5 * (1.0 + phi**-0.5))


def m1_real_axis(E, pi: PopulationSpectrum, phi: float, cfg: SolverConfig = DEFAULT_CONFIG, eta: float | None = None):
    """Boundary value ``m1(E + i0)`` by extrapolation in ``sqrt(eta)``.

    Uses ``eta, 4 eta, 16 eta`` and removes the ``sqrt(eta)`` and ``eta``
    terms, which covers both regular points and square-root edges.
    """
    if eta is None:
        eta = 1e-6 * (1.0 + phi**-0.5)
    Ea = np.atleast_1d(np.asarray(E, dtype=float))
    z = np.concatenate([Ea + 1j * eta, Ea + 4j * eta, Ea + 16j * eta])
    m = solve_m1(z, pi, phi, cfg).m1
    n = len(Ea)
    m_t, m_2t, m_4t = m[:n], m[n : 2 * n], m[2 * n :]
    d1 = m_2t - m_t
    d2 = m_4t - m_2t
    bt2 = (d2 - 2.0 * d1) / 6.0
    at = d1 - 3.0 * bt2
    out = m_t - at - bt2
    return complex(out[0]) if np.ndim(E) == 0 else out


# ---------------------------------------------------------------------------
# classical locations

@dataclass(frozen=True)
class ClassicalLocations:
    counts: tuple[int, ...]
    gammas: tuple[np.ndarray, ...]  # per component, decreasing

    def component(self, k: int) -> np.ndarray:
        return self.gammas[k - 1]

    def to_csv(self, path: str | Path, header: str | None = None) -> None:
        rows = ((k, i, g) for k, gs in enumerate(self.gammas, start=1) for i, g in enumerate(gs, start=1))
        write_csv(path, ["k", "i", "gamma"], rows, header)


def _largest_remainder(masses: Sequence[float], total: int) -> list[int]:
    raw = np.asarray(masses, dtype=float)
    base = np.floor(raw).astype(int)
    short = total - int(base.sum())
    if short < 0 or short > len(raw):
        raise MassMismatch(f"component masses {raw} cannot be rounded to {total}")
    for j in np.argsort(-(raw - base), kind="stable")[:short]:
        base[j] += 1
    return [int(b) for b in base]


def classical_locations(
    pi: PopulationSpectrum, phi: float, dims: Dimensions, cfg: SolverConfig = DEFAULT_CONFIG
) -> ClassicalLocations:
    """Quantiles ``gamma_{k,i}`` with ``N int_gamma^{R_k} rho_W = i - 1/2``."""
    sm = support_map(pi, phi, cfg)
    N, K = dims.N, dims.K
    masses = [N * c.mass_w for c in sm.components]
    naive = [int(round(m)) for m in masses]
    if abs(sum(naive) - K) > 1:
        raise MassMismatch(f"classical counts {naive} sum to {sum(naive)}, expected K={K}")
    counts = _largest_remainder(masses, K)

    gammas = []
    for cdf, n_k in zip(sm.cdfs, counts):
        target = (np.arange(1, n_k + 1) - 0.5) / N
        lo = np.full(n_k, cdf.L)
        hi = np.full(n_k, cdf.R)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            above = cdf.mass_above(mid) > target
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
            if np.all(hi - lo <= 1e-14 * np.maximum(1.0, np.abs(hi))):
                break
        gammas.append(0.5 * (lo + hi))
    return ClassicalLocations(tuple(counts), tuple(gammas))


# ---------------------------------------------------------------------------
# spectral domains

def in_domain(
    z: SpectralPoint,
    kind: Literal["D", "D_os"],
    dims: Dimensions,
    c: float = 0.5,
    delta: float = 0.1,
    support: SupportMap | None = None,
    pi: PopulationSpectrum | None = None,
) -> bool:
    """Membership in the near-spectrum domain ``D`` or the outside domain ``D_os``."""
    if z.scale != "rescaled":
        raise ValueError("domain tests use the rescaled scale")
    if support is None:
        if pi is None:
            raise ValueError("need a support map or a spectrum")
        support = support_map(pi, dims.phi)
    phi = dims.phi
    s = 1.0 + phi**-0.5
    if kind == "D":
        kappa = float(support.kappa(z.E))
        return kappa <= c and dims.K ** (-1.0 + c) <= z.eta <= s / c
    if kind == "D_os":
        return z.E - support.rightmost_edge >= dims.N ** (-2.0 / 3.0 + delta) * s and 0.0 < z.eta < s / delta
    raise ValueError(f"unknown domain {kind!r}")


# ---------------------------------------------------------------------------
# csv helper

def write_csv(path: str | Path, columns: Sequence[str], rows, header: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
