"""Mixture weights on the probability simplex and their exponentiated update.

Weights are plain float64 numpy vectors. The update multiplies each weight
by ``exp(eta * benefit)``, renormalizes, then mixes in a ``smoothing``
fraction of the uniform vector so no source is ever starved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericOverflowError

SIMPLEX_ATOL = 1e-12


def as_weights(alpha) -> np.ndarray:
    return np.array(alpha, dtype=np.float64).reshape(-1)


def uniform(k: int) -> np.ndarray:
    if k < 2:
        raise InvalidArgumentError(f"need at least 2 sources, got {k}")
    return np.full(k, 1.0 / k)


def validate_simplex(alpha, atol: float = SIMPLEX_ATOL) -> bool:
    """True iff ``alpha`` is non-negative and sums to one within ``atol``."""
    try:
        a = as_weights(alpha)
    except (TypeError, ValueError):
        return False
    if a.size == 0 or not np.all(np.isfinite(a)):
        return False
    return bool(np.all(a >= 0.0) and abs(a.sum() - 1.0) <= atol)


def _check_simplex(alpha, name="alpha") -> np.ndarray:
    a = as_weights(alpha)
    if a.size < 2:
        raise InvalidArgumentError(f"{name} needs at least 2 entries, got {a.size}")
    if not validate_simplex(a):
        raise InvalidArgumentError(f"{name} is not a point on the simplex: {a.tolist()}")
    return a


def eg_update(alpha, lam, eta: float, c: float) -> np.ndarray:
    """One exponentiated-gradient step followed by uniform smoothing.

    The exponent is shifted by its maximum before exponentiation (the
    log-sum-exp trick), so large ``eta * lam`` cannot overflow; the shift
    cancels in the normalization.
    """
    a = _check_simplex(alpha)
    g = as_weights(lam)
    if g.shape != a.shape:
        raise InvalidArgumentError(f"dimension mismatch: alpha has {a.size} entries, lambda has {g.size}")
    if np.any(np.isnan(g)) or np.any(g < 0):
        raise InvalidArgumentError(f"benefit signal must be non-negative: {g.tolist()}")
    if not eta > 0:
        raise InvalidArgumentError(f"step size must be positive, got {eta}")
    if not 0.0 <= c <= 1.0:
        raise InvalidArgumentError(f"smoothing must lie in [0, 1], got {c}")

    with np.errstate(over="ignore", invalid="ignore"):
        z = eta * g
        if not np.all(np.isfinite(z)):
            raise NumericOverflowError(f"eta * lambda is not finite ({z.tolist()}); reduce the step size")
        # only sources with positive weight compete for the maximum
        live = a > 0
        shifted = a * np.exp(z - z[live].max())
    total = shifted.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericOverflowError("renormalization failed; reduce the step size")
    k = a.size
    return (1.0 - c) * (shifted / total) + c / k


def average_weights(history: Sequence) -> np.ndarray:
    """Entrywise mean of a non-empty sequence of simplex points."""
    if len(history) == 0:
        raise InvalidArgumentError("cannot average an empty weight history")
    rows = [_check_simplex(h, name=f"history[{i}]") for i, h in enumerate(history)]
    k = rows[0].size
    if any(r.size != k for r in rows):
        raise InvalidArgumentError("weight history mixes dimensions")
    return np.mean(np.vstack(rows), axis=0)


@dataclass(frozen=True)
class ReweightConfig:
    step_size: float = 7.0
    smoothing: float = 1e-4
    total_steps: int = 2000
    batch_size: int = 4
    eval_interval: int = 32
    max_example_tokens: int = 8192

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidArgumentError("step_size must be positive")
        if not 0.0 <= self.smoothing <= 1.0:
            raise InvalidArgumentError("smoothing must lie in [0, 1]")
        if self.total_steps < 0:
            raise InvalidArgumentError("total_steps must be non-negative")
        if self.batch_size < 1 or self.eval_interval < 1 or self.max_example_tokens < 1:
            raise InvalidArgumentError("batch_size, eval_interval and max_example_tokens must be positive")
        if self.total_steps and self.eval_interval > self.total_steps:
            raise InvalidArgumentError("eval_interval cannot exceed total_steps")
