"""Population spectra, dimensions, spiked models and spectral points.

The population covariance enters every computation only through its
spectrum, so a covariance is represented by a finite atomic probability
measure ``pi`` on its eigenvalues.  Two scales are used for spectral
parameters:

* ``o_scale`` -- the usual sample covariance normalisation, in which the
  identity-covariance bulk lives on ``[(1 - sqrt(phi))**2, (1 + sqrt(phi))**2]``;
* ``rescaled`` -- the ``(MN)**(-1/4)`` entry normalisation, obtained from the
  o-scale by the factor ``phi**(-1/2)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Literal

import numpy as np

from .errors import SpectrumError, SpectrumOutOfRange, ZeroTotalWeight

DEFAULT_TAU = 0.05
MERGE_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12

Scale = Literal["rescaled", "o_scale"]


@dataclass(frozen=True)
class PopulationSpectrum:
    """Atomic probability measure on the population eigenvalues.

    Build instances with :func:`make_spectrum`; the constructor only checks
    the invariants and does not sort or merge.
    """

    atoms: tuple[tuple[float, float], ...]
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        if not self.atoms:
            raise SpectrumError("spectrum needs at least one atom")
        if not 0.0 < self.tau < 1.0:
            raise SpectrumError(f"tau must lie in (0, 1), got {self.tau}")
        vals = [v for v, _ in self.atoms]
        wts = [w for _, w in self.atoms]
        if any(not math.isfinite(v) or not math.isfinite(w) for v, w in self.atoms):
            raise SpectrumError("non-finite atom")
        if any(w <= 0.0 or w > 1.0 for w in wts):
            raise SpectrumError("atom weights must lie in (0, 1]")
        if abs(math.fsum(wts) - 1.0) > WEIGHT_SUM_TOL:
            raise SpectrumError(f"weights sum to {math.fsum(wts)!r}, not 1")
        if any(a <= b for a, b in zip(vals, vals[1:])):
            raise SpectrumError("atom values must be strictly decreasing")
        if vals[-1] <= 0.0:
            raise SpectrumOutOfRange("atom values must be strictly positive")
        if vals[0] > 1.0 / self.tau:
            raise SpectrumOutOfRange(f"atom {vals[0]} exceeds 1/tau = {1.0 / self.tau}")
        low_mass = math.fsum(w for v, w in self.atoms if v <= self.tau)
        if low_mass > 1.0 - self.tau:
            raise SpectrumOutOfRange(f"mass {low_mass} on [0, tau] exceeds 1 - tau")

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms], dtype=float)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    def __len__(self) -> int:
        return len(self.atoms)

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.values**k))

    @property
    def is_degenerate(self) -> bool:
        return len(self.atoms) == 1

    def to_json(self) -> dict[str, Any]:
        return {"atoms": [[v, w] for v, w in self.atoms]}


def make_spectrum(raw_atoms: Iterable[tuple[float, float]], tau: float = DEFAULT_TAU) -> PopulationSpectrum:
    """Validate and normalise ``(value, weight)`` pairs into a spectrum.

    Weights are normalised to total mass one, atoms are sorted in
    decreasing order and values closer than ``1e-12`` are merged (weights
    summed, value replaced by the weighted mean).
    """
    pairs = [(float(v), float(w)) for v, w in raw_atoms]
    if not pairs:
        raise ZeroTotalWeight("no atoms given")
    for v, w in pairs:
        if not w > 0.0:
            raise SpectrumError(f"weight must be positive, got {w}")
        if v < 0.0:
            raise SpectrumError(f"value must be nonnegative, got {v}")
    total = math.fsum(w for _, w in pairs)
    if total <= 0.0:
        raise ZeroTotalWeight("total weight is zero")

    pairs.sort(key=lambda a: -a[0])
    merged: list[list[float]] = []
    for v, w in pairs:
        if merged and abs(merged[-1][0] - v) <= MERGE_TOL:
            v0, w0 = merged[-1]
            merged[-1] = [(v0 * w0 + v * w) / (w0 + w), w0 + w]
        else:
            merged.append([v, w])

    weights = [w for _, w in merged]
    # already normalised input is kept bit for bit, so the map is idempotent
    if abs(total - 1.0) > 1e-14:
        weights = [w / total for w in weights]
        # absorb the rounding residue in the heaviest atom so the sum is 1 to ~1 ulp
        heaviest = int(np.argmax(weights))
        weights[heaviest] += 1.0 - math.fsum(weights)
    return PopulationSpectrum(tuple((v, w) for (v, _), w in zip(merged, weights)), tau=tau)


def identity_spectrum() -> PopulationSpectrum:
    return make_spectrum([(1.0, 1.0)])


@dataclass(frozen=True)
class Dimensions:
    M: int
    N: int

    def __post_init__(self) -> None:
        if int(self.M) != self.M or int(self.N) != self.N:
            raise SpectrumError("dimensions must be integers")
        if self.M < 2 or self.N < 2:
            raise SpectrumError(f"need M, N >= 2, got M={self.M}, N={self.N}")

    @property
    def phi(self) -> float:
        return self.M / self.N

    @property
    def K(self) -> int:
        return min(self.M, self.N)


@dataclass(frozen=True)
class SpikedModel:
    """Spikes ``(alpha, q)`` above a bulk spectrum, in dimension ``total_dim``."""

    spikes: tuple[tuple[float, int], ...]
    bulk: PopulationSpectrum
    total_dim: int

    def __post_init__(self) -> None:
        alphas = [a for a, _ in self.spikes]
        if any(a <= 0 for a in alphas):
            raise SpectrumError("spike values must be positive")
        if any(int(q) != q or q < 1 for _, q in self.spikes):
            raise SpectrumError("spike multiplicities must be positive integers")
        if any(a <= b for a, b in zip(alphas, alphas[1:])):
            raise SpectrumError("spikes must be strictly decreasing")
        if alphas and alphas[-1] <= self.bulk.values[0]:
            raise SpectrumError("every spike must exceed the largest bulk value")
        if self.n_spiked >= self.total_dim:
            raise SpectrumError(f"{self.n_spiked} spiked directions do not fit in M={self.total_dim}")

    @property
    def L(self) -> int:
        return len(self.spikes)

    @property
    def n_spiked(self) -> int:
        """Total spiked multiplicity (sum of q)."""
        return int(sum(q for _, q in self.spikes))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.spikes], dtype=float)

    @property
    def bulk_mass(self) -> float:
        """Mass ``(M - sum q) / M`` carried by the bulk under the full spectrum."""
        return (self.total_dim - self.n_spiked) / self.total_dim

    def with_dim(self, M: int) -> "SpikedModel":
        return SpikedModel(self.spikes, self.bulk, int(M))


def spiked_to_full(model: SpikedModel) -> PopulationSpectrum:
    M = model.total_dim
    atoms = [(a, q / M) for a, q in model.spikes]
    atoms += [(v, w * model.bulk_mass) for v, w in model.bulk.atoms]
    return make_spectrum(atoms, tau=model.bulk.tau)


@dataclass(frozen=True)
class SpectralPoint:
    E: float
    eta: float
    scale: Scale = "rescaled"

    def __post_init__(self) -> None:
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.scale not in ("rescaled", "o_scale"):
            raise ValueError(f"unknown scale {self.scale!r}")

    @property
    def z(self) -> complex:
        return complex(self.E, self.eta)


def rescale_point(p: SpectralPoint, phi: float, target_scale: Scale) -> SpectralPoint:
    """Convert between the two scales using ``z = phi**(-1/2) * z_o``."""
    if not phi > 0:
        raise ValueError("phi must be positive")
    if target_scale == p.scale:
        return p
    if target_scale == "rescaled":
        f = 1.0 / math.sqrt(phi)
    elif target_scale == "o_scale":
        f = math.sqrt(phi)
    else:
        raise ValueError(f"unknown scale {target_scale!r}")
    return SpectralPoint(p.E * f, p.eta * f, target_scale)


# ---------------------------------------------------------------------------
# JSON loading

def spectrum_from_json(doc: dict[str, Any] | str | Path, tau: float = DEFAULT_TAU) -> PopulationSpectrum | SpikedModel:
    """Load ``{"atoms": [[v, w], ...]}`` or ``{"spikes": ..., "bulk": ..., "M": int}``.

    ``doc`` may be a parsed dict, a path, or a JSON string.  ``bulk`` is
    either a nested atoms document or the string ``"identity"``.
    """
    if isinstance(doc, Path) or (isinstance(doc, str) and not doc.lstrip().startswith("{")):
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise SpectrumError("spectrum document must be a JSON object")

    if "atoms" in doc:
        extra = set(doc) - {"atoms"}
        if extra:
            raise SpectrumError(f"unknown keys in spectrum document: {sorted(extra)}")
        return make_spectrum([tuple(a) for a in doc["atoms"]], tau=tau)
    if "spikes" in doc:
        extra = set(doc) - {"spikes", "bulk", "M"}
        if extra:
            raise SpectrumError(f"unknown keys in spiked-model document: {sorted(extra)}")
        bulk_doc = doc.get("bulk", "identity")
        bulk = identity_spectrum() if bulk_doc == "identity" else spectrum_from_json(bulk_doc, tau=tau)
        if isinstance(bulk, SpikedModel):
            raise SpectrumError("bulk must be a plain spectrum")
        if "M" not in doc:
            raise SpectrumError("spiked-model document needs M")
        spikes = tuple((float(a), int(q)) for a, q in doc["spikes"])
        return SpikedModel(spikes, bulk, int(doc["M"]))
    raise SpectrumError("spectrum document needs 'atoms' or 'spikes'")
