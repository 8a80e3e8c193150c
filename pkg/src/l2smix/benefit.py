"""Ability bounds and the clamped benefit signals that drive reweighting.

Efficiency is measured as negative mean token count, capability as mean
accuracy. The bounds come from two reference models: a short-CoT model
(token floor) and the original long-CoT model (accuracy ceiling).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateReferencesError, InvalidArgumentError

DENOMINATOR_EPS = 1e-9


@dataclass(frozen=True)
class ValidationReport:
    mean_accuracy: float
    mean_tokens: float
    sample_count: int = 1
    step: int = 0

    def __post_init__(self):
        if not (0.0 <= self.mean_accuracy <= 1.0):
            raise InvalidArgumentError(f"mean_accuracy must lie in [0, 1], got {self.mean_accuracy}")
        if not (self.mean_tokens >= 0.0 and np.isfinite(self.mean_tokens)):
            raise InvalidArgumentError(f"mean_tokens must be finite and >= 0, got {self.mean_tokens}")
        if self.sample_count < 1:
            raise InvalidArgumentError(f"sample_count must be >= 1, got {self.sample_count}")
        if self.step < 0:
            raise InvalidArgumentError(f"step must be >= 0, got {self.step}")

    @classmethod
    def from_samples(cls, correct: Sequence[bool], tokens: Sequence[float], step: int = 0):
        """Empirical means over ``K`` dev-set generations."""
        if len(correct) == 0 or len(correct) != len(tokens):
            raise InvalidArgumentError("need equally many (>= 1) correctness flags and token counts")
        return cls(
            mean_accuracy=float(np.mean(np.asarray(correct, dtype=np.float64))),
            mean_tokens=float(np.mean(np.asarray(tokens, dtype=np.float64))),
            sample_count=len(correct),
            step=step,
        )

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AbilityBounds:
    phi_sys1_bound: float
    phi_sys2_bound: float

    def __post_init__(self):
        if self.phi_sys1_bound > 0:
            raise InvalidArgumentError("efficiency bound is a negated token count and must be <= 0")
        if not 0.0 <= self.phi_sys2_bound <= 1.0:
            raise InvalidArgumentError("accuracy bound must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.phi_sys1_bound, self.phi_sys2_bound])


@dataclass(frozen=True)
class ReferenceProfile:
    short_ref: ValidationReport
    long_ref: ValidationReport

    def token_gap(self) -> float:
        return phi_sys1(self.short_ref) - phi_sys1(self.long_ref)

    def accuracy_gap(self) -> float:
        return phi_sys2(self.long_ref) - phi_sys2(self.short_ref)

    def check(self):
        if self.token_gap() <= DENOMINATOR_EPS:
            raise DegenerateReferencesError(
                "short reference must use strictly fewer tokens than the long reference "
                f"(short={self.short_ref.mean_tokens}, long={self.long_ref.mean_tokens})"
            )
        if self.accuracy_gap() <= DENOMINATOR_EPS:
            raise DegenerateReferencesError(
                "long reference must be strictly more accurate than the short reference "
                f"(long={self.long_ref.mean_accuracy}, short={self.short_ref.mean_accuracy})"
            )
        return self


def phi_sys1(report: ValidationReport) -> float:
    return -float(report.mean_tokens)


def phi_sys2(report: ValidationReport) -> float:
    return float(report.mean_accuracy)


def phi(report: ValidationReport) -> np.ndarray:
    return np.array([phi_sys1(report), phi_sys2(report)])


def estimate_bounds(short_ref: ValidationReport, long_ref: ValidationReport) -> AbilityBounds:
    """Token floor from the short-CoT reference, accuracy ceiling from the long one."""
    return AbilityBounds(phi_sys1_bound=phi_sys1(short_ref), phi_sys2_bound=phi_sys2(long_ref))


def lambda_sys1(bounds: AbilityBounds, proxy: ValidationReport, refs: ReferenceProfile) -> float:
    denom = refs.token_gap()
    if denom <= DENOMINATOR_EPS:
        raise DegenerateReferencesError(f"token gap between references is {denom}")
    return max((bounds.phi_sys1_bound - phi_sys1(proxy)) / denom, 0.0)


def lambda_sys2(bounds: AbilityBounds, proxy: ValidationReport, refs: ReferenceProfile) -> float:
    denom = refs.accuracy_gap()
    if denom <= DENOMINATOR_EPS:
        raise DegenerateReferencesError(f"accuracy gap between references is {denom}")
    return max((bounds.phi_sys2_bound - phi_sys2(proxy)) / denom, 0.0)


def benefit_signal(bounds: AbilityBounds, proxy: ValidationReport, refs: ReferenceProfile) -> np.ndarray:
    return np.array([lambda_sys1(bounds, proxy, refs), lambda_sys2(bounds, proxy, refs)])


def gaps(bounds: AbilityBounds, proxy: ValidationReport) -> np.ndarray:
    """Per-source distance from the bound (can be negative when the proxy beats it)."""
    return bounds.as_array() - phi(proxy)


def objective(alpha, bounds: AbilityBounds, proxy: ValidationReport) -> float:
    """Weighted gap sum; logged as a diagnostic, never minimized directly."""
    a = np.asarray(alpha, dtype=np.float64)
    d = gaps(bounds, proxy)
    if a.shape != d.shape:
        raise InvalidArgumentError("objective needs one weight per source")
    return float(a[0] * d[0] + a[1] * d[1])
