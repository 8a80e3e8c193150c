"""Synthetic proxy trainer for closed-loop runs without a language model.

The proxy is summarized by its cumulative System-1 and System-2 exposure.
Token length decays from the long-CoT level toward the short-CoT level as
System-1 exposure grows; the accuracy lost along the way is recovered by
System-2 exposure:

    tokens   = T_s + (T_l - T_s) * exp(-k_t * e1)
    accuracy = A_l - (A_l - A_s) * (1 - exp(-k_t * e1)) * exp(-k_a * e2)

At zero exposure the proxy is the long-CoT reference.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .benefit import ReferenceProfile, ValidationReport
from .data import Batch, sample_batch
from .errors import InvalidArgumentError

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ProxyState:
    exposure_sys1: float = 0.0
    exposure_sys2: float = 0.0
    step: int = 0


@dataclass(frozen=True)
class ResponseSurface:
    acc_long: float = 0.75
    acc_short: float = 0.40
    tok_long: float = 1300.0
    tok_short: float = 300.0
    rate_token: float = 3.0
    rate_acc: float = 2.0
    noise_sd_acc: float = 0.01
    noise_sd_tok: float = 10.0
    exposure_scale: float = 1000.0
    dev_size: int = 512

    def __post_init__(self):
        if not (0.0 <= self.acc_short < self.acc_long <= 1.0):
            raise InvalidArgumentError("need 0 <= acc_short < acc_long <= 1")
        if not (0.0 < self.tok_short < self.tok_long):
            raise InvalidArgumentError("need 0 < tok_short < tok_long")
        if self.rate_token <= 0 or self.rate_acc <= 0:
            raise InvalidArgumentError("response rates must be positive")
        if self.noise_sd_acc < 0 or self.noise_sd_tok < 0:
            raise InvalidArgumentError("noise standard deviations must be non-negative")
        if self.exposure_scale <= 0 or self.dev_size < 1:
            raise InvalidArgumentError("exposure_scale and dev_size must be positive")

    def noiseless(self) -> "ResponseSurface":
        return replace(self, noise_sd_acc=0.0, noise_sd_tok=0.0)

    def tokens(self, e1):
        return self.tok_short + (self.tok_long - self.tok_short) * np.exp(-self.rate_token * np.asarray(e1, dtype=np.float64))

    def accuracy(self, e1, e2):
        e1 = np.asarray(e1, dtype=np.float64)
        e2 = np.asarray(e2, dtype=np.float64)
        lost = (self.acc_long - self.acc_short) * (-np.expm1(-self.rate_token * e1))
        return self.acc_long - lost * np.exp(-self.rate_acc * e2)


def train_step(state: ProxyState, batch: Batch, exposure_scale: float = 1000.0) -> ProxyState:
    n1 = batch.count("system1")
    n2 = batch.count("system2")
    return ProxyState(
        exposure_sys1=state.exposure_sys1 + n1 / exposure_scale,
        exposure_sys2=state.exposure_sys2 + n2 / exposure_scale,
        step=state.step + 1,
    )


def evaluate(state: ProxyState, surface: ResponseSurface, noise_seed: int) -> ValidationReport:
    """Validation report of the proxy, with seeded Gaussian measurement noise."""
    tokens = float(surface.tokens(state.exposure_sys1))
    acc = float(surface.accuracy(state.exposure_sys1, state.exposure_sys2))
    if surface.noise_sd_acc > 0 or surface.noise_sd_tok > 0:
        ss = np.random.SeedSequence([noise_seed & _U64, state.step & _U64])
        z = np.random.Generator(np.random.PCG64(ss)).standard_normal(2)
        acc += surface.noise_sd_acc * float(z[0])
        tokens += surface.noise_sd_tok * float(z[1])
    return ValidationReport(
        mean_accuracy=min(max(acc, 0.0), 1.0),
        mean_tokens=max(tokens, 0.0),
        sample_count=surface.dev_size,
        step=state.step,
    )


def reference_reports(surface: ResponseSurface) -> ReferenceProfile:
    return ReferenceProfile(
        short_ref=ValidationReport(surface.acc_short, surface.tok_short, surface.dev_size),
        long_ref=ValidationReport(surface.acc_long, surface.tok_long, surface.dev_size),
    )


def surface_grid(surface: ResponseSurface, max_exposure: float = 2.0, points: int = 21):
    """Noiseless (e1, e2, tokens, accuracy) rows over a square exposure grid."""
    if points < 2:
        raise InvalidArgumentError("grid needs at least 2 points per axis")
    axis = np.linspace(0.0, max_exposure, points)
    rows = []
    for e1 in axis:
        for e2 in axis:
            rows.append((float(e1), float(e2), float(surface.tokens(e1)), float(surface.accuracy(e1, e2))))
    return rows


class SimulatedTrainer:
    """Trainer backend that advances a ``ProxyState`` on sampled batches."""

    def __init__(self, surface: ResponseSurface, pool, batch_size: int, seed: int):
        self.surface = surface
        self.pool = pool
        self.batch_size = batch_size
        self.seed = seed
        self.state = ProxyState()

    def references(self) -> ReferenceProfile:
        return reference_reports(self.surface)

    def train(self, steps: int, alpha):
        for _ in range(steps):
            batch = sample_batch(self.pool, alpha, self.batch_size, self.seed, self.state.step)
            self.state = train_step(self.state, batch, self.surface.exposure_scale)

    def evaluate(self) -> tuple[ValidationReport, str]:
        report = evaluate(self.state, self.surface, self.seed)
        return report, f"step-{self.state.step:06d}"

    def noiseless_report(self) -> ValidationReport:
        return evaluate(self.state, self.surface.noiseless(), self.seed)

    def close(self):
        pass
