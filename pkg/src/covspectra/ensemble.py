"""Sample covariance ensembles, their spectra and empirical Stieltjes transforms.

Entries of the ``M x N`` data matrix are ``(MN)**(-1/4) * xi`` with ``xi``
standardised (mean 0, variance 1).  The companion matrix ``W = X^T Sigma X``
is ``N x N``; when ``M < N`` its spectrum is obtained from the smaller
``M x M`` Gram matrix and padded with exact zeros.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Literal, TypeVar

import numpy as np

from .errors import AllocationTooLarge, EigensolverFailure, ReplicaError
from .spectrum import Dimensions, PopulationSpectrum, SpectralPoint

Distribution = Literal["gaussian", "rademacher", "uniform_std"]
DISTRIBUTIONS: tuple[str, ...] = ("gaussian", "rademacher", "uniform_std")
DEFAULT_MAX_ENTRIES = 2**28
MASK64 = (1 << 64) - 1

T = TypeVar("T")


def splitmix64(seed: int, r: int) -> int:
    """Seed of replica ``r``: the ``(r+1)``-th output of splitmix64 started at ``seed``."""
    z = (int(seed) + (int(r) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def multiplicities(pi: PopulationSpectrum, M: int) -> np.ndarray:
    """Integer multiplicities summing to ``M``, by largest-remainder rounding."""
    raw = pi.weights * M
    base = np.floor(raw).astype(np.int64)
    short = M - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


@dataclass(frozen=True)
class SampleSpec:
    dims: Dimensions
    spectrum: PopulationSpectrum
    distribution: Distribution = "gaussian"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}; choose from {DISTRIBUTIONS}")
        if int(self.seed) != self.seed or not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def sigma_diag(self) -> np.ndarray:
        """Diagonal of the realised population covariance, in decreasing order."""
        return np.repeat(self.spectrum.values, multiplicities(self.spectrum, self.dims.M))

    def with_seed(self, seed: int) -> "SampleSpec":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class SampleEigenvalues:
    lambdas: np.ndarray  # descending, length N
    dims: Dimensions
    seed: int | None = None

    @property
    def N(self) -> int:
        return len(self.lambdas)

    def nonzero(self) -> np.ndarray:
        """The top ``K`` eigenvalues (the rest are structural zeros)."""
        return self.lambdas[: self.dims.K]


def _draw(rng: np.random.Generator, dist: str, shape: tuple[int, int]) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(shape)
    if dist == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=shape)


def data_matrix(spec: SampleSpec, max_entries: int = DEFAULT_MAX_ENTRIES) -> np.ndarray:
    """The ``M x N`` matrix ``X``; deterministic in ``spec``."""
    M, N = spec.dims.M, spec.dims.N
    if M * N > max_entries:
        raise AllocationTooLarge(f"M*N = {M * N} exceeds the budget of {max_entries} entries")
    rng = np.random.Generator(np.random.Philox(key=int(spec.seed)))
    return _draw(rng, spec.distribution, (M, N)) * (M * N) ** -0.25


def gram_matrix(spec: SampleSpec, X: np.ndarray | None = None) -> np.ndarray:
    """Gram matrix on the smaller side: ``X^T Sigma X`` if ``N <= M``, else ``Sigma^1/2 X X^T Sigma^1/2``."""
    if X is None:
        X = data_matrix(spec)
    Y = np.sqrt(spec.sigma_diag)[:, None] * X
    return Y.T @ Y if spec.dims.N <= spec.dims.M else Y @ Y.T


def generate_sample(spec: SampleSpec, max_entries: int = DEFAULT_MAX_ENTRIES) -> SampleEigenvalues:
    A = gram_matrix(spec, data_matrix(spec, max_entries))
    try:
        lam = np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    lam = lam[::-1]
    pad = spec.dims.N - len(lam)
    if pad > 0:
        lam = np.concatenate([lam, np.zeros(pad)])
    return SampleEigenvalues(np.ascontiguousarray(lam), spec.dims, spec.seed)


def empirical_stieltjes(s: SampleEigenvalues | np.ndarray, z):
    """``(1/N) sum_k 1/(lambda_k - z)``, zeros included; ``z`` may be an array."""
    lam = s.lambdas if isinstance(s, SampleEigenvalues) else np.asarray(s, dtype=float)
    if isinstance(z, SpectralPoint):
        if z.scale != "rescaled":
            raise ValueError("empirical transforms use the rescaled scale")
        z = z.z
    za = np.asarray(z, dtype=complex)
    flat = za.ravel()
    out = np.empty(flat.shape, dtype=complex)
    # chunk to bound the temporary N x len(z) array
    step = max(1, 2**22 // max(1, len(lam)))
    for j in range(0, len(flat), step):
        out[j : j + step] = np.mean(1.0 / (lam[:, None] - flat[None, j : j + step]), axis=0)
    return complex(out[0]) if za.ndim == 0 else out.reshape(za.shape)


def replica_seeds(seed: int, R: int) -> list[int]:
    return [splitmix64(seed, r) for r in range(R)]


def replicate(
    spec: SampleSpec,
    R: int,
    body: Callable[[SampleSpec], T] = generate_sample,
    threads: int = 1,
) -> list[T]:
    """Run ``body`` on ``R`` replicas of ``spec`` with split seeds.

    Results are ordered by replica index and do not depend on ``threads``.
    Failures are collected and raised together as :class:`ReplicaError`.
    """
    if R < 1:
        raise ValueError("need R >= 1")
    specs = [spec.with_seed(s) for s in replica_seeds(spec.seed, R)]
    results: list[Any] = [None] * R
    failures: dict[int, BaseException] = {}

    def run(r: int) -> None:
        try:
            results[r] = body(specs[r])
        except Exception as exc:  # noqa: BLE001 - aggregated below
            failures[r] = exc

    if threads <= 1:
        for r in range(R):
            run(r)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(R)))
    if failures:
        raise ReplicaError(failures)
    return results


# ---------------------------------------------------------------------------
# csv I/O

def write_eigenvalues(path: str | Path, lambdas, header: dict[str, Any] | None = None) -> None:
    lam = lambdas.lambdas if isinstance(lambdas, SampleEigenvalues) else np.asarray(lambdas, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header is not None:
            fh.write(f"# {json.dumps(header, sort_keys=True)}\n")
        fh.write("lambda\n")
        for v in lam:
            fh.write(f"{float(v)!r}\n")


def read_eigenvalues(path: str | Path) -> tuple[np.ndarray, dict[str, Any] | None]:
    """Read a one-column CSV with header ``lambda``; returns values (descending) and the JSON header."""
    meta = None
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            text = ln[1:].strip()
            if meta is None and text.startswith("{"):
                meta = json.loads(text)
            continue
        body.append(ln)
    rows = list(csv.reader(body))
    if not rows or rows[0][0].strip() != "lambda":
        raise ValueError(f"{path}: expected a header line 'lambda'")
    vals = np.array([float(r[0]) for r in rows[1:]], dtype=float)
    return np.sort(vals)[::-1], meta
