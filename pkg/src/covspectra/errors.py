"""Exception hierarchy shared by all covspectra modules."""

from __future__ import annotations


class CovSpectraError(Exception):
    """Base class for every error raised by this package."""


# spectrum
class SpectrumError(CovSpectraError, ValueError):
    pass


class ZeroTotalWeight(SpectrumError):
    pass


class SpectrumOutOfRange(SpectrumError):
    pass


# solver
class SolverError(CovSpectraError, ArithmeticError):
    pass


class PoleEvaluation(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class LeftUpperHalfPlane(SolverError):
    """Both the Newton step and the damped fallback left C+ (a bug, not bad input)."""


# support
class SupportError(CovSpectraError, ArithmeticError):
    pass


class DegenerateInterval(SupportError):
    pass


class OddCriticalCount(SupportError):
    pass


class MassMismatch(SupportError):
    pass


# ensemble
class EnsembleError(CovSpectraError):
    pass


class EigensolverFailure(EnsembleError):
    pass


class AllocationTooLarge(EnsembleError, MemoryError):
    pass


class ReplicaError(EnsembleError):
    """One or more replicas failed; ``failures`` maps replica index to exception."""

    def __init__(self, failures: dict[int, BaseException]):
        self.failures = dict(sorted(failures.items()))
        detail = "; ".join(f"replica {r}: {e!r}" for r, e in self.failures.items())
        super().__init__(f"{len(self.failures)} replica(s) failed: {detail}")


# lawcheck
class LawCheckError(CovSpectraError):
    pass


class DomainViolation(LawCheckError, ValueError):
    pass


class InsufficientPoints(LawCheckError, ValueError):
    pass


# spikes
class SpikeError(CovSpectraError):
    pass


class InsideBulkSupport(SpikeError, ValueError):
    pass


class DistanceSpikeViolation(SpikeError):
    pass


class ClusterCountMismatch(SpikeError):
    """Raised when a detection window does not capture exactly q_l eigenvalues.

    ``counts`` maps spike index (1-based) to ``(captured, expected)``.
    """

    def __init__(self, counts: dict[int, tuple[int, int]]):
        self.counts = counts
        bad = {ell: c for ell, c in counts.items() if c[0] != c[1]}
        super().__init__(
            "cluster detection failed: "
            + ", ".join(f"spike {ell} captured {got} (expected {want})" for ell, (got, want) in bad.items())
        )


class ZeroDenominator(SpikeError, ZeroDivisionError):
    pass


class GapCollapse(SpikeError):
    pass


class EmptyCluster(SpikeError, ValueError):
    pass
