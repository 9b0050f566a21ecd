"""Monte Carlo checks of the global law, local law, rigidity and outside law.

Each check simulates replicas through :func:`covspectra.ensemble.replicate`,
compares against the deterministic equivalents from the solver and support
modules, and summarises the result in a :class:`LawCheckReport`.

Stochastic domination is replaced by a concrete rule: the median over
replicas must stay below the theoretical envelope times ``K**EPS_SLACK``,
and where a decay rate is claimed the fitted log-log slope must match it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np

from .ensemble import (
    Distribution,
    SampleSpec,
    empirical_stieltjes,
    generate_sample,
    replica_seeds,
    replicate,
)
from .errors import DomainViolation, InsufficientPoints
from .solver import DEFAULT_CONFIG, SolverConfig, solve_m1
from .spectrum import Dimensions, PopulationSpectrum
from .support import SupportMap, classical_locations, support_map

EPS_SLACK = 0.15
KS_TOL = 0.02
LOCAL_SLOPE = -1.0
LOCAL_SLOPE_TOL = 0.3
DOMAIN_C = 0.1

Law = Literal["global", "local", "rigidity", "outside", "location", "rate"]


@dataclass(frozen=True)
class LawCheckReport:
    law: Law
    grid: list
    empirical: list[float]
    bound: list[float]
    slope: float | None
    passed: bool
    replicas: int
    seeds: dict[str, Any]
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not len(self.grid) == len(self.empirical) == len(self.bound):
            raise ValueError("grid, empirical and bound must have equal length")

    def row_pass(self) -> list[bool]:
        return [bool(e <= b) for e, b in zip(self.empirical, self.bound)]

    def to_json(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["grid"] = [_jsonable(g) for g in self.grid]
        return doc

    def to_csv(self, path: str | Path, header: dict[str, Any] | None = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header is not None:
                fh.write(f"# {json.dumps(header, sort_keys=True)}\n")
            fh.write("probe,empirical_median,envelope,pass\n")
            for g, e, b, ok in zip(self.grid, self.empirical, self.bound, self.row_pass()):
                fh.write(f"{_probe_text(g)},{e!r},{b!r},{str(ok).lower()}\n")


def _jsonable(g):
    if isinstance(g, complex):
        return [g.real, g.imag]
    if isinstance(g, tuple):
        return list(g)
    return g


def _probe_text(g) -> str:
    if isinstance(g, complex):
        return f"{g.real!r}{g.imag:+}j"
    if isinstance(g, tuple):
        return ":".join(str(x) for x in g)
    return repr(g)


def fit_loglog(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares fit of ``log y = slope * log x + intercept``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise InsufficientPoints(f"need at least 3 paired points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InsufficientPoints("log-log fit needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def ks_distance(lambdas: np.ndarray, support: SupportMap) -> float:
    """Kolmogorov-Smirnov distance between an ESD (ties allowed) and the ``rho_W`` CDF."""
    lam = np.sort(np.asarray(lambdas, dtype=float))
    n = len(lam)
    x = np.unique(lam)
    upper = np.searchsorted(lam, x, side="right") / n
    lower = np.searchsorted(lam, x, side="left") / n
    d_up = np.abs(upper - support.cdf_w(x))
    d_lo = np.abs(lower - support.cdf_w(x, left_limit=True))
    return float(max(d_up.max(), d_lo.max()))


def _resolve_phi(phi: float | None, dims: Dimensions) -> float:
    if phi is None:
        return dims.phi
    if not math.isclose(phi, dims.phi, rel_tol=1e-12):
        raise ValueError(f"phi={phi} does not match M/N={dims.phi}")
    return dims.phi


def _seeds(seed: int, R: int) -> dict[str, Any]:
    return {"seed": int(seed), "replica_seeds": replica_seeds(seed, R)}


# ---------------------------------------------------------------------------
# global law

def check_global(
    pi: PopulationSpectrum,
    phi: float | None,
    dims: Dimensions,
    distribution: Distribution = "gaussian",
    seed: int = 0,
    tol: float = KS_TOL,
) -> LawCheckReport:
    """KS distance between the ESD of ``W`` and ``rho_W`` for one sample."""
    phi = _resolve_phi(phi, dims)
    sm = support_map(pi, phi)
    s = generate_sample(SampleSpec(dims, pi, distribution, seed))
    ks = ks_distance(s.lambdas, sm)
    return LawCheckReport(
        law="global",
        grid=[dims.K],
        empirical=[ks],
        bound=[tol],
        slope=None,
        passed=ks <= tol,
        replicas=1,
        seeds={"seed": int(seed)},
        extra={"M": dims.M, "N": dims.N, "distribution": distribution, "asymptotic_regime": dims.K >= 1000},
    )


# ---------------------------------------------------------------------------
# local law

def local_domain_ok(E: float, eta: float, dims: Dimensions, support: SupportMap, c: float = DOMAIN_C) -> bool:
    """Probe admissibility for the local law.

    ``eta`` must lie in ``[K**(-1+c), (1 + phi**(-1/2)) / c]`` and ``E`` within
    ``c`` of the support (bulk interior included).
    """
    s = 1.0 + dims.phi**-0.5
    eta_ok = dims.K ** (-1.0 + c) * (1 - 1e-12) <= eta <= s / c
    near = bool(support.inside(E)) or float(support.kappa(E)) <= c
    return eta_ok and near


def default_eta_grid(dims: Dimensions, n: int = 8, top: float = 0.1) -> np.ndarray:
    return np.geomspace(dims.K**-0.9, top, n)


def bulk_center(support: SupportMap) -> float:
    c = support.components[0]
    return 0.5 * (c.L_k_rescaled + c.R_k_rescaled)


def check_local(
    pi: PopulationSpectrum,
    phi: float | None,
    dims: Dimensions,
    E: float | None = None,
    eta_grid: Sequence[float] | None = None,
    R: int = 20,
    seed: int = 0,
    distribution: Distribution = "gaussian",
    threads: int = 1,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> LawCheckReport:
    """Median ``|m_W - m1|`` over replicas along a vertical line at ``E``."""
    phi = _resolve_phi(phi, dims)
    sm = support_map(pi, phi, cfg)
    if E is None:
        E = bulk_center(sm)
    etas = np.sort(np.asarray(default_eta_grid(dims) if eta_grid is None else eta_grid, dtype=float))
    for eta in etas:
        if not local_domain_ok(E, float(eta), dims, sm):
            raise DomainViolation(f"probe E={E}, eta={eta} is outside the local-law domain")
    z = E + 1j * etas
    m1 = solve_m1(z, pi, phi, cfg).m1

    def body(spec: SampleSpec) -> np.ndarray:
        return np.abs(empirical_stieltjes(generate_sample(spec), z) - m1)

    errs = np.array(replicate(SampleSpec(dims, pi, distribution, seed), R, body, threads))
    med = np.median(errs, axis=0)
    bound = dims.K**EPS_SLACK / (dims.N * etas)
    slope, intercept, r2 = fit_loglog(etas, med)
    passed = abs(slope - LOCAL_SLOPE) <= LOCAL_SLOPE_TOL and bool(np.all(med <= bound))
    return LawCheckReport(
        law="local",
        grid=[complex(v) for v in z],
        empirical=med.tolist(),
        bound=bound.tolist(),
        slope=slope,
        passed=passed,
        replicas=R,
        seeds=_seeds(seed, R),
        extra={"M": dims.M, "N": dims.N, "E": float(E), "intercept": intercept, "r2": r2, "distribution": distribution},
    )


# ---------------------------------------------------------------------------
# rigidity

def rigidity_envelope(K: int, i) -> np.ndarray:
    return K ** (-2.0 / 3.0 + 0.2) * np.asarray(i, dtype=float) ** (-1.0 / 3.0)


def rigidity_report(
    samples: Sequence[np.ndarray],
    gammas: np.ndarray,
    i_values: Sequence[int],
    K: int,
    seeds: dict[str, Any] | None = None,
) -> LawCheckReport:
    """Rigidity verdict from eigenvalue lists (descending) and classical locations."""
    idx = np.asarray(i_values, dtype=int)
    lam = np.array([np.asarray(s, dtype=float)[idx - 1] for s in samples])
    med = np.median(np.abs(lam - np.asarray(gammas)[idx - 1]), axis=0)
    bound = rigidity_envelope(K, idx)
    return LawCheckReport(
        law="rigidity",
        grid=[(1, int(i)) for i in idx],
        empirical=med.tolist(),
        bound=bound.tolist(),
        slope=None,
        passed=bool(np.all(med <= bound)),
        replicas=len(samples),
        seeds=seeds or {},
        extra={"K": K},
    )


def check_rigidity(
    pi: PopulationSpectrum,
    phi: float | None,
    dims: Dimensions,
    R: int = 50,
    seed: int = 0,
    i_max: int | None = None,
    i_values: Sequence[int] | None = None,
    distribution: Distribution = "gaussian",
    threads: int = 1,
) -> LawCheckReport:
    """Median ``|lambda_{1,i} - gamma_{1,i}|`` in the rightmost component."""
    phi = _resolve_phi(phi, dims)
    gam = classical_locations(pi, phi, dims).component(1)
    if i_values is None:
        i_values = range(1, (i_max or min(50, len(gam))) + 1)
    i_values = [int(i) for i in i_values]
    if max(i_values) > len(gam) or min(i_values) < 1:
        raise ValueError(f"indices must lie in [1, {len(gam)}]")
    top = max(i_values)

    def body(spec: SampleSpec) -> np.ndarray:
        return generate_sample(spec).lambdas[:top]

    samples = replicate(SampleSpec(dims, pi, distribution, seed), R, body, threads)
    return rigidity_report(samples, gam, i_values, dims.K, _seeds(seed, R))


# ---------------------------------------------------------------------------
# outside the spectrum

def outside_envelope(K: int, kappa, eta) -> np.ndarray:
    t = np.asarray(kappa, dtype=float) + eta
    return K**EPS_SLACK / K / (t + t**2)


def check_outside(
    pi: PopulationSpectrum,
    phi: float | None,
    dims: Dimensions,
    kappa_grid: Sequence[float] = (0.1, 0.2, 0.5, 1.0),
    R: int = 20,
    seed: int = 0,
    delta: float = 0.1,
    eta: float = 1e-6,
    distribution: Distribution = "gaussian",
    threads: int = 1,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> LawCheckReport:
    """Median ``|m_W - m1|`` at ``z = R + kappa + i eta`` to the right of the spectrum."""
    phi = _resolve_phi(phi, dims)
    sm = support_map(pi, phi, cfg)
    kap = np.asarray(kappa_grid, dtype=float)
    s = 1.0 + phi**-0.5
    floor = dims.N ** (-2.0 / 3.0 + delta) * s
    for k in kap:
        if not (k >= floor and 0.0 < eta < s / delta):
            raise DomainViolation(f"probe kappa={k}, eta={eta} is outside the outside-law domain (kappa >= {floor:.4g})")
    z = sm.rightmost_edge + kap + 1j * eta
    m1 = solve_m1(z, pi, phi, cfg).m1

    def body(spec: SampleSpec) -> np.ndarray:
        return np.abs(empirical_stieltjes(generate_sample(spec), z) - m1)

    errs = np.array(replicate(SampleSpec(dims, pi, distribution, seed), R, body, threads))
    med = np.median(errs, axis=0)
    bound = outside_envelope(dims.K, kap, eta)
    return LawCheckReport(
        law="outside",
        grid=[complex(v) for v in z],
        empirical=med.tolist(),
        bound=bound.tolist(),
        slope=None,
        passed=bool(np.all(med <= bound)),
        replicas=R,
        seeds=_seeds(seed, R),
        extra={"M": dims.M, "N": dims.N, "kappa": kap.tolist(), "eta": eta, "delta": delta},
    )
