"""Spiked covariance models: outlier locations and spike estimators.

A population eigenvalue ``alpha`` above the bulk produces a sample outlier
near ``psi(alpha)`` whenever ``psi'(alpha) > 0``.  Two estimators invert this
relation from the sample alone:

* Bai-Ding: ``alpha_B(lambda_j) = -sqrt(phi) / m(lambda_j)`` where ``m`` is the
  empirical Stieltjes transform of ``W`` with the cluster removed;
* Mestre: ``alpha_M = (N sqrt(phi) / q) * sum (lambda - mu)`` where ``mu`` are
  the real zeros of ``m_W`` just below the cluster eigenvalues.

All spectral quantities are on the rescaled scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .ensemble import (
    Distribution,
    SampleEigenvalues,
    SampleSpec,
    generate_sample,
    replica_seeds,
    replicate,
    splitmix64,
)
from .errors import (
    ClusterCountMismatch,
    DistanceSpikeViolation,
    EmptyCluster,
    GapCollapse,
    InsideBulkSupport,
    ZeroDenominator,
)
from .lawcheck import LawCheckReport, fit_loglog
from .spectrum import Dimensions, PopulationSpectrum, SpikedModel, spiked_to_full
from .support import SupportMap, support_map

DEFAULT_MARGIN = 0.05
RATE_SLOPE = -0.5
RATE_SLOPE_TOL = 0.15
RATE_R2 = 0.9
GAP_MIN = 1e-13


# ---------------------------------------------------------------------------
# psi map

def _check_outside(x: np.ndarray, bulk: PopulationSpectrum) -> None:
    lo, hi = bulk.values[-1], bulk.values[0]
    bad = (x >= lo) & (x <= hi)
    if np.any(bad):
        raise InsideBulkSupport(f"x={x[bad][0]} lies inside the bulk spectrum [{lo}, {hi}]")


def psi(x, bulk: PopulationSpectrum, phi: float, mass: float = 1.0):
    """``x / sqrt(phi) + sqrt(phi) * x * mass * int t / (x - t) dpi(t)``.

    ``mass`` scales the bulk measure; model-based callers pass ``(M - sum q) / M``.
    """
    xa = np.asarray(x, dtype=float)
    _check_outside(np.atleast_1d(xa), bulk)
    s = math.sqrt(phi)
    t, w = bulk.values, bulk.weights
    integral = np.sum(w * t / (xa[..., None] - t), axis=-1)
    out = xa / s + s * xa * mass * integral
    return float(out) if xa.ndim == 0 else out


def psi_prime(x, bulk: PopulationSpectrum, phi: float, mass: float = 1.0):
    """Derivative ``1/sqrt(phi) - sqrt(phi) * mass * int t**2 / (x - t)**2 dpi(t)``."""
    xa = np.asarray(x, dtype=float)
    _check_outside(np.atleast_1d(xa), bulk)
    s = math.sqrt(phi)
    t, w = bulk.values, bulk.weights
    out = 1.0 / s - s * mass * np.sum(w * t**2 / (xa[..., None] - t) ** 2, axis=-1)
    return float(out) if xa.ndim == 0 else out


def model_psi(model: SpikedModel, phi: float, x=None):
    """``psi`` with the bulk measure weighted by the model's bulk mass."""
    x = model.alphas if x is None else x
    return psi(x, model.bulk, phi, model.bulk_mass)


# ---------------------------------------------------------------------------
# distance-spike condition

@dataclass(frozen=True)
class DistanceSpikeCheck:
    ok: bool
    psi_prime: tuple[float, ...]
    gaps: tuple[float, ...]
    margin: float

    def __bool__(self) -> bool:
        return self.ok


def check_distance_spike(model: SpikedModel, phi: float, margin: float = DEFAULT_MARGIN) -> DistanceSpikeCheck:
    """Finite-size separation test: spike gaps and ``psi'(alpha)`` all at least ``margin``."""
    a = model.alphas
    pp = np.atleast_1d(psi_prime(a, model.bulk, phi, model.bulk_mass))
    gaps = -np.diff(a)
    ok = bool(np.all(pp >= margin) and np.all(gaps >= margin))
    return DistanceSpikeCheck(ok, tuple(float(v) for v in pp), tuple(float(g) for g in gaps), margin)


# ---------------------------------------------------------------------------
# clusters

@dataclass(frozen=True)
class SpikeCluster:
    ell: int  # 1-based spike index
    member_indices: tuple[int, ...]  # 0-based positions in the descending eigenvalue list
    window: tuple[float, float]

    @property
    def q(self) -> int:
        return len(self.member_indices)


def _lambdas(s) -> np.ndarray:
    return s.lambdas if isinstance(s, SampleEigenvalues) else np.asarray(s, dtype=float)


def psi_windows(model: SpikedModel, phi: float, support: SupportMap) -> list[tuple[float, float]]:
    centers = np.atleast_1d(model_psi(model, phi))
    clearance = centers[-1] - support.rightmost_edge
    if clearance <= 0:
        raise DistanceSpikeViolation(
            f"predicted outlier {centers[-1]:.6g} does not clear the bulk edge {support.rightmost_edge:.6g}"
        )
    windows = []
    for ell, c in enumerate(centers):
        neighbours = [abs(c - centers[j]) for j in (ell - 1, ell + 1) if 0 <= j < len(centers)]
        half = min(neighbours + [clearance]) / 3.0
        windows.append((float(c - half), float(c + half)))
    return windows


def detect_clusters(
    s: SampleEigenvalues | np.ndarray,
    model: SpikedModel,
    phi: float,
    support: SupportMap | None = None,
    require_separation: bool = True,
    method: Literal["psi", "gap"] = "psi",
    margin: float = DEFAULT_MARGIN,
) -> list[SpikeCluster]:
    """Assign sample eigenvalues to spikes.

    ``method="psi"`` centres a window on each predicted location; ``"gap"``
    takes the top ``sum q`` eigenvalues in order and only requires them to
    sit above the bulk edge.  ``support`` is the bulk-only support map.
    """
    lam = _lambdas(s)
    if support is None:
        support = support_map(model.bulk, phi)
    if require_separation:
        chk = check_distance_spike(model, phi, margin)
        if not chk:
            raise DistanceSpikeViolation(f"spikes not separated: psi'={chk.psi_prime}, gaps={chk.gaps}")
    qs = [int(q) for _, q in model.spikes]

    if method == "gap":
        clusters, start = [], 0
        for ell, q in enumerate(qs, start=1):
            idx = tuple(range(start, start + q))
            clusters.append(SpikeCluster(ell, idx, (float(lam[idx[-1]]), float(lam[idx[0]]))))
            start += q
        if lam[start - 1] <= support.rightmost_edge:
            raise ClusterCountMismatch({c.ell: (sum(lam[i] > support.rightmost_edge for i in c.member_indices), c.q) for c in clusters})
        return clusters

    windows = psi_windows(model, phi, support)
    clusters, counts = [], {}
    for ell, ((lo, hi), q) in enumerate(zip(windows, qs), start=1):
        idx = tuple(int(i) for i in np.flatnonzero((lam >= lo) & (lam <= hi)))
        counts[ell] = (len(idx), q)
        clusters.append(SpikeCluster(ell, idx, (lo, hi)))
    if any(got != want for got, want in counts.values()):
        raise ClusterCountMismatch(counts)
    return clusters


# ---------------------------------------------------------------------------
# estimators

def bai_ding_pointwise(lambda_j: float, cluster: SpikeCluster, s, phi: float) -> float:
    """``-sqrt(phi) / [(1/N) sum_{k not in cluster} 1/(lambda_k - lambda_j)]``."""
    lam = _lambdas(s)
    keep = np.ones(len(lam), dtype=bool)
    keep[list(cluster.member_indices)] = False
    diff = lam[keep] - lambda_j
    if np.any(diff == 0.0):
        raise ZeroDenominator(f"lambda_j={lambda_j} coincides with a non-cluster eigenvalue")
    total = float(np.sum(1.0 / diff)) / len(lam)
    if total == 0.0:
        raise ZeroDenominator("empirical transform vanishes at lambda_j")
    return -math.sqrt(phi) / total


def bai_ding_averaged(cluster: SpikeCluster, s, phi: float) -> float:
    if not cluster.member_indices:
        raise EmptyCluster(f"cluster {cluster.ell} is empty")
    lam = _lambdas(s)
    return float(np.mean([bai_ding_pointwise(lam[i], cluster, lam, phi) for i in cluster.member_indices]))


def _mw_real(lam: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.mean(1.0 / (lam[:, None] - x[None, :]), axis=0)


def mestre_poles(cluster: SpikeCluster, s) -> list[float]:
    """Zeros of ``x -> (1/N) sum 1/(lambda_k - x)`` in the gap just below each member."""
    if not cluster.member_indices:
        raise EmptyCluster(f"cluster {cluster.ell} is empty")
    lam = _lambdas(s)
    members = sorted(cluster.member_indices)
    if members[-1] + 1 >= len(lam):
        raise GapCollapse("cluster contains the smallest eigenvalue; no gap below it")
    hi = np.array([lam[i] for i in members])
    lo = np.array([lam[i + 1] for i in members])
    if np.any(hi - lo < GAP_MIN):
        raise GapCollapse(f"gap below a cluster eigenvalue is under {GAP_MIN}")
    a, b = lo.copy(), hi.copy()
    for _ in range(200):
        mid = 0.5 * (a + b)
        pos = _mw_real(lam, mid) > 0  # increasing between poles
        b = np.where(pos, mid, b)
        a = np.where(pos, a, mid)
        if np.all(b - a <= 1e-12 * np.maximum(np.abs(mid), 1e-300)):
            break
    return (0.5 * (a + b)).tolist()


def mestre_estimate(cluster: SpikeCluster, s, phi: float, poles: Sequence[float] | None = None) -> float:
    """``(N sqrt(phi) / q) * sum_{lambda in cluster} (lambda - mu)``."""
    lam = _lambdas(s)
    mu = np.asarray(mestre_poles(cluster, lam) if poles is None else poles, dtype=float)
    members = np.array([lam[i] for i in sorted(cluster.member_indices)])
    return len(lam) * math.sqrt(phi) / len(members) * float(np.sum(members - mu))


@dataclass(frozen=True)
class SpikeEstimate:
    ell: int
    alpha_true: float | None
    alpha_hat_B: float
    alpha_hat_M: float
    pointwise_B: tuple[float, ...]
    poles_mu: tuple[float, ...]
    predicted_location: float | None
    n_members: int = field(default=0)


def estimate_spikes(
    s,
    model: SpikedModel,
    phi: float,
    support: SupportMap | None = None,
    method: Literal["psi", "gap"] = "psi",
    require_separation: bool = True,
) -> list[SpikeEstimate]:
    lam = _lambdas(s)
    clusters = detect_clusters(lam, model, phi, support, require_separation, method)
    try:
        predicted = np.atleast_1d(model_psi(model, phi))
    except InsideBulkSupport:
        predicted = [None] * model.L
    out = []
    for c, (alpha, _), loc in zip(clusters, model.spikes, predicted):
        pw = tuple(bai_ding_pointwise(lam[i], c, lam, phi) for i in c.member_indices)
        mu = tuple(mestre_poles(c, lam))
        out.append(
            SpikeEstimate(
                ell=c.ell,
                alpha_true=float(alpha),
                alpha_hat_B=float(np.mean(pw)),
                alpha_hat_M=mestre_estimate(c, lam, phi, mu),
                pointwise_B=pw,
                poles_mu=mu,
                predicted_location=None if loc is None else float(loc),
                n_members=c.q,
            )
        )
    return out


def write_estimates(path: str | Path, estimates: Sequence[SpikeEstimate], header: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        fh.write("ell,alpha_true,alpha_hat_B,alpha_hat_M,predicted_location,n_members\n")
        for e in estimates:
            cells = [e.ell, e.alpha_true, e.alpha_hat_B, e.alpha_hat_M, e.predicted_location, e.n_members]
            fh.write(",".join("" if v is None else repr(v) for v in cells) + "\n")


# ---------------------------------------------------------------------------
# Monte Carlo checks

def location_report(deviations: np.ndarray, K: int, seeds: dict | None = None, extra: dict | None = None) -> LawCheckReport:
    """Verdict from per-replica deviations, shape ``(R, L)``."""
    dev = np.atleast_2d(np.asarray(deviations, dtype=float))
    med = np.median(dev, axis=0)
    bound = np.full(med.shape, K ** (-0.5 + 0.2))
    return LawCheckReport(
        law="location",
        grid=list(range(1, len(med) + 1)),
        empirical=med.tolist(),
        bound=bound.tolist(),
        slope=None,
        passed=bool(np.all(med <= bound)),
        replicas=dev.shape[0],
        seeds=seeds or {},
        extra=dict(extra or {}, K=K),
    )


def location_check(
    model: SpikedModel,
    phi: float | None,
    dims: Dimensions,
    R: int = 50,
    seed: int = 0,
    distribution: Distribution = "gaussian",
    threads: int = 1,
    method: Literal["psi", "gap"] = "psi",
) -> LawCheckReport:
    """Median over replicas of ``max_j |lambda_j - psi(alpha_l)|`` over each cluster.

    With ``method="gap"`` the clusters are the top eigenvalues in order, so
    for a single simple spike the deviation is ``|lambda_1 - psi(alpha)|``.
    """
    phi = dims.phi if phi is None else phi
    model = model.with_dim(dims.M)
    bulk_sm = support_map(model.bulk, phi)
    pred = np.atleast_1d(model_psi(model, phi))
    full = spiked_to_full(model)

    def body(spec: SampleSpec) -> np.ndarray:
        lam = generate_sample(spec).lambdas
        clusters = detect_clusters(lam, model, phi, bulk_sm, method=method)
        return np.array([np.max(np.abs(lam[list(c.member_indices)] - p)) for c, p in zip(clusters, pred)])

    dev = np.array(replicate(SampleSpec(dims, full, distribution, seed), R, body, threads))
    return location_report(
        dev, dims.K, {"seed": int(seed), "replica_seeds": replica_seeds(seed, R)}, {"predicted": pred.tolist()}
    )


def detection_rate(
    model: SpikedModel,
    dims: Dimensions,
    R: int = 50,
    seed: int = 0,
    distribution: Distribution = "gaussian",
    threads: int = 1,
) -> tuple[float, list[bool]]:
    """Fraction of replicas in which :func:`detect_clusters` succeeds.

    A model failing the separation test never succeeds.
    """
    model = model.with_dim(dims.M)
    phi = dims.phi
    if not check_distance_spike(model, phi):
        return 0.0, [False] * R
    bulk_sm = support_map(model.bulk, phi)

    def body(spec: SampleSpec) -> bool:
        try:
            detect_clusters(generate_sample(spec), model, phi, bulk_sm)
        except ClusterCountMismatch:
            return False
        return True

    hits = replicate(SampleSpec(dims, spiked_to_full(model), distribution, seed), R, body, threads)
    return sum(hits) / R, hits


def rate_report(N_list: Sequence[int], medians: Sequence[float], seeds: dict | None = None, extra: dict | None = None) -> LawCheckReport:
    """Rate verdict: slope ``-0.5 +- 0.15`` and ``r2 >= 0.9``."""
    Ns = np.asarray(N_list, dtype=float)
    med = np.asarray(medians, dtype=float)
    slope, intercept, r2 = fit_loglog(Ns, med)
    passed = abs(slope - RATE_SLOPE) <= RATE_SLOPE_TOL and r2 >= RATE_R2
    return LawCheckReport(
        law="rate",
        grid=[int(n) for n in N_list],
        empirical=med.tolist(),
        bound=(Ns ** (-0.5 + 0.2)).tolist(),
        slope=slope,
        passed=bool(passed),
        replicas=0,
        seeds=seeds or {},
        extra=dict(extra or {}, intercept=intercept, r2=r2),
    )


def rate_experiment(
    model_template: SpikedModel,
    phi: float,
    N_list: Sequence[int],
    R: int = 100,
    seed: int = 0,
    ell: int = 1,
    distribution: Distribution = "gaussian",
    threads: int = 1,
    method: Literal["psi", "gap"] = "gap",
) -> LawCheckReport:
    """Median ``|alpha_B - alpha|`` against ``N`` with ``M = round(phi N)``.

    Mestre errors and ``|alpha_M - alpha_B|`` are computed from the same
    replicas and stored in ``extra``.  Clusters default to the top
    eigenvalues (``method="gap"``): at small ``N`` the outlier often leaves
    the narrow psi window even though it is well separated from the bulk.
    """
    alpha = float(model_template.spikes[ell - 1][0])
    med_b, med_m, med_d, seeds = [], [], [], {}
    for N in N_list:
        M = int(round(phi * N))
        dims = Dimensions(M, int(N))
        model = model_template.with_dim(M)
        full = spiked_to_full(model)
        bulk_sm = support_map(model.bulk, dims.phi)
        seed_n = splitmix64(seed, int(N))
        seeds[str(N)] = seed_n

        def body(spec: SampleSpec, model=model, bulk_sm=bulk_sm, dims=dims) -> tuple[float, float]:
            est = estimate_spikes(generate_sample(spec), model, dims.phi, bulk_sm, method)[ell - 1]
            return est.alpha_hat_B, est.alpha_hat_M

        res = np.array(replicate(SampleSpec(dims, full, distribution, seed_n), R, body, threads))
        med_b.append(float(np.median(np.abs(res[:, 0] - alpha))))
        med_m.append(float(np.median(np.abs(res[:, 1] - alpha))))
        med_d.append(float(np.median(np.abs(res[:, 1] - res[:, 0]))))

    mest = fit_loglog(N_list, med_m)
    report = rate_report(
        N_list,
        med_b,
        {"seed": int(seed), "per_N": seeds},
        {
            "alpha": alpha,
            "phi": phi,
            "mestre_median": med_m,
            "mestre_slope": mest[0],
            "mestre_r2": mest[2],
            "diff_median": med_d,
            "diff_bound": [n ** (-0.5 + 0.2) for n in N_list],
        },
    )
    return LawCheckReport(**{**report.__dict__, "replicas": R})
