"""Closed-loop dynamic reweighting run.

At every evaluation boundary the proxy is validated, the benefit signal is
computed against the reference bounds, the mixture weights are updated, and
then the trainer runs ``eval_interval`` steps under the new weights. Weights
are constant inside a window.
"""

from __future__ import annotations

import configparser
import json
import logging
import os
import shlex
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import benefit
from .benefit import ReferenceProfile, ValidationReport
from .data import DataPool
from .errors import ConfigError, InvalidArgumentError, L2SError, NoQualifyingCheckpointError
from .external import DEFAULT_TIMEOUT, ExternalTrainer
from .mixture import ReweightConfig, _check_simplex, average_weights, eg_update
from .simulator import ResponseSurface, SimulatedTrainer, reference_reports

log = logging.getLogger(__name__)

SEED_ENV = "L2S_SEED"


@dataclass(frozen=True)
class CheckpointRecord:
    checkpoint_id: str
    step: int
    report: ValidationReport


def select_checkpoint(records: Sequence[CheckpointRecord], original_accuracy: float, factor: float = 0.3) -> CheckpointRecord:
    """Shortest-output checkpoint whose accuracy is at least ``factor * original_accuracy``.

    Ties on token length go to the earliest step.
    """
    if not records:
        raise InvalidArgumentError("no checkpoints to choose from")
    if not original_accuracy > 0:
        raise InvalidArgumentError("original accuracy must be positive")
    if not 0.0 < factor <= 1.0:
        raise InvalidArgumentError(f"factor must lie in (0, 1], got {factor}")
    threshold = factor * original_accuracy
    eligible = [r for r in records if r.report.mean_accuracy >= threshold]
    if not eligible:
        raise NoQualifyingCheckpointError(f"no checkpoint reaches accuracy {threshold:.6g}")
    return min(eligible, key=lambda r: (r.report.mean_tokens, r.step))


# -- configuration ------------------------------------------------------------


def _parse_alpha(text) -> tuple[float, ...]:
    parts = [p for p in str(text).replace(":", ",").split(",") if p.strip()]
    try:
        values = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"cannot parse mixture weights {text!r}") from exc
    try:
        _check_simplex(values)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    return values


@dataclass(frozen=True)
class RunConfig:
    reweight: ReweightConfig = field(default_factory=ReweightConfig)
    initial_alpha: tuple[float, ...] = (0.5, 0.5)
    seed: int = 0
    trainer_backend: str = "simulated"
    surface: ResponseSurface = field(default_factory=ResponseSurface)
    system1_path: str | None = None
    system2_path: str | None = None
    dev_path: str | None = None
    tokenizer: str = "whitespace"
    keep_correct: bool = True
    checkpoint_accuracy_factor: float = 0.3
    static_alpha: tuple[float, ...] | None = None
    external_command: tuple[str, ...] = ()
    external_timeout: float = DEFAULT_TIMEOUT
    references: ReferenceProfile | None = None

    def __post_init__(self):
        if self.trainer_backend not in ("simulated", "external"):
            raise ConfigError(f"trainer must be 'simulated' or 'external', got {self.trainer_backend!r}")
        if len(self.initial_alpha) != 2:
            raise ConfigError("initial_alpha needs two entries (system1, system2)")
        if self.static_alpha is not None and len(self.static_alpha) != 2:
            raise ConfigError("static mixture needs two entries (system1, system2)")
        if not 0.0 < self.checkpoint_accuracy_factor <= 1.0:
            raise ConfigError("checkpoint_accuracy_factor must lie in (0, 1]")
        if self.trainer_backend == "external":
            if not self.external_command:
                raise ConfigError("external trainer needs [external] command")
            if self.references is None:
                raise ConfigError("external trainer needs a [references] section")
        if self.external_timeout <= 0:
            raise ConfigError("external timeout must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.references is not None:
            d["references"] = {
                "short": self.references.short_ref.to_dict(),
                "long": self.references.long_ref.to_dict(),
            }
        return d


_REWEIGHT_KEYS = {f.name: f.type for f in fields(ReweightConfig)}
_SURFACE_KEYS = {f.name for f in fields(ResponseSurface)}


def load_config(path=None, *, seed: int | None = None, static: str | Sequence[float] | None = None, env=None) -> RunConfig:
    """Build a ``RunConfig`` from an INI file plus overrides.

    Seed precedence: ``seed`` argument, then ``$L2S_SEED``, then the file.
    Relative data paths resolve against the config file's directory.
    """
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    base = Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.parent
    known = {"run", "surface", "data", "external", "references"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")

    def section(name):
        return cp[name] if cp.has_section(name) else {}

    run = dict(section("run"))
    try:
        rw = {}
        for key in list(run):
            if key in _REWEIGHT_KEYS:
                raw = run.pop(key)
                rw[key] = float(raw) if key in ("step_size", "smoothing") else int(raw)
        reweight = ReweightConfig(**rw)

        surf = dict(section("surface"))
        bad = set(surf) - _SURFACE_KEYS
        if bad:
            raise ConfigError(f"unknown [surface] key(s): {sorted(bad)}")
        surface = ResponseSurface(**{k: (int(v) if k == "dev_size" else float(v)) for k, v in surf.items()})

        kwargs = {}
        if "initial_alpha" in run:
            kwargs["initial_alpha"] = _parse_alpha(run.pop("initial_alpha"))
        if "static_alpha" in run:
            kwargs["static_alpha"] = _parse_alpha(run.pop("static_alpha"))
        if "seed" in run:
            kwargs["seed"] = int(run.pop("seed"))
        if "trainer" in run:
            kwargs["trainer_backend"] = run.pop("trainer").strip()
        if "tokenizer" in run:
            kwargs["tokenizer"] = run.pop("tokenizer").strip()
        if "keep_correct" in run:
            kwargs["keep_correct"] = cp.getboolean("run", "keep_correct")
            run.pop("keep_correct")
        if "checkpoint_accuracy_factor" in run:
            kwargs["checkpoint_accuracy_factor"] = float(run.pop("checkpoint_accuracy_factor"))
        if run:
            raise ConfigError(f"unknown [run] key(s): {sorted(run)}")

        data = dict(section("data"))
        for key, attr in (("system1", "system1_path"), ("system2", "system2_path"), ("dev", "dev_path")):
            if key in data:
                kwargs[attr] = str(base / data.pop(key))
        if data:
            raise ConfigError(f"unknown [data] key(s): {sorted(data)}")

        ext = dict(section("external"))
        if "command" in ext:
            kwargs["external_command"] = tuple(shlex.split(ext.pop("command")))
        if "timeout" in ext:
            kwargs["external_timeout"] = float(ext.pop("timeout"))
        if ext:
            raise ConfigError(f"unknown [external] key(s): {sorted(ext)}")

        if cp.has_section("references"):
            r = cp["references"]
            n = int(r.get("sample_count", "1"))
            kwargs["references"] = ReferenceProfile(
                short_ref=ValidationReport(float(r["short_accuracy"]), float(r["short_tokens"]), n),
                long_ref=ValidationReport(float(r["long_accuracy"]), float(r["long_tokens"]), n),
            )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (ValueError, TypeError) as exc:
        if isinstance(exc, L2SError):
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"bad config value: {exc}") from exc

    if seed is None and env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    if seed is not None:
        kwargs["seed"] = int(seed)
    if static is not None:
        kwargs["static_alpha"] = _parse_alpha(static if isinstance(static, str) else ",".join(map(str, static)))
    return RunConfig(reweight=reweight, surface=surface, **kwargs)


# -- run log ------------------------------------------------------------------


@dataclass
class RunEntry:
    step: int
    alpha: list[float]
    lam: list[float]
    report: ValidationReport
    objective: float
    checkpoint_id: str

    def to_dict(self):
        return {
            "type": "eval",
            "step": self.step,
            "alpha": self.alpha,
            "lambda": self.lam,
            "report": self.report.to_dict(),
            "objective": self.objective,
            "checkpoint_id": self.checkpoint_id,
        }


@dataclass
class RunLog:
    entries: list[RunEntry]
    averaged_alpha: list[float]
    bounds: benefit.AbilityBounds
    references: ReferenceProfile
    selected_checkpoint: str | None
    final_objective: float
    mode: str = "dynamic"
    seed: int = 0

    @property
    def final_report(self) -> ValidationReport:
        return self.entries[-1].report

    @property
    def checkpoints(self) -> list[CheckpointRecord]:
        return [CheckpointRecord(e.checkpoint_id, e.step, e.report) for e in self.entries]

    def summary(self) -> dict:
        return {
            "type": "summary",
            "mode": self.mode,
            "seed": self.seed,
            "evaluations": len(self.entries),
            "averaged_alpha": self.averaged_alpha,
            "final_alpha": self.entries[-1].alpha,
            "final_report": self.final_report.to_dict(),
            "final_objective": self.final_objective,
            "bounds": {"phi_sys1_bound": self.bounds.phi_sys1_bound, "phi_sys2_bound": self.bounds.phi_sys2_bound},
            "references": {"short": self.references.short_ref.to_dict(), "long": self.references.long_ref.to_dict()},
            "selected_checkpoint": self.selected_checkpoint,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_dict(), sort_keys=True) for e in self.entries]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def read_runlog(path) -> tuple[list[dict], dict]:
    entries, summary = [], None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if obj.get("type") == "summary":
            summary = obj
        else:
            entries.append(obj)
    return entries, summary


# -- the loop -----------------------------------------------------------------


def build_trainer(config: RunConfig):
    if config.trainer_backend == "external":
        return ExternalTrainer(config.external_command, seed=config.seed, timeout=config.external_timeout)
    if config.system1_path and config.system2_path:
        pool = DataPool.from_files(
            config.system1_path,
            config.system2_path,
            config.dev_path,
            max_tokens=config.reweight.max_example_tokens,
            tokenizer=config.tokenizer,
            keep_correct=config.keep_correct,
        )
    else:
        pool = DataPool.synthetic()
    pool.check_ready()
    return SimulatedTrainer(config.surface, pool, config.reweight.batch_size, config.seed)


def run_pipeline(config: RunConfig, trainer=None) -> RunLog:
    """Run the reweighting loop to ``total_steps`` and return its log.

    ``trainer`` defaults to the backend named in ``config``; the run owns
    (and closes) a trainer it builds itself.
    """
    refs = config.references
    if refs is None:
        refs = trainer.references() if hasattr(trainer, "references") else reference_reports(config.surface)
    refs.check()
    bounds = benefit.estimate_bounds(refs.short_ref, refs.long_ref)

    owned = trainer is None
    if owned:
        trainer = build_trainer(config)
    rc = config.reweight
    static = config.static_alpha is not None
    alpha = np.array(config.static_alpha if static else config.initial_alpha, dtype=np.float64)
    _check_simplex(alpha)

    entries: list[RunEntry] = []
    step = 0
    try:
        while True:
            report, ckpt = trainer.evaluate()
            lam = benefit.benefit_signal(bounds, report, refs)
            if step < rc.total_steps and not static:
                alpha = eg_update(alpha, lam, rc.step_size, rc.smoothing)
            entries.append(
                RunEntry(step, alpha.tolist(), lam.tolist(), report, benefit.objective(alpha, bounds, report), ckpt)
            )
            log.debug("step %d alpha=%s lambda=%s acc=%.4f tok=%.1f", step, alpha, lam, report.mean_accuracy, report.mean_tokens)
            if step >= rc.total_steps:
                break
            n = min(rc.eval_interval, rc.total_steps - step)
            trainer.train(n, alpha)
            step += n
    finally:
        if owned:
            trainer.close()

    avg = average_weights([e.alpha for e in entries])
    final = entries[-1].report
    try:
        chosen = select_checkpoint(
            [CheckpointRecord(e.checkpoint_id, e.step, e.report) for e in entries],
            refs.long_ref.mean_accuracy,
            config.checkpoint_accuracy_factor,
        ).checkpoint_id
    except NoQualifyingCheckpointError as exc:
        log.warning("checkpoint selection: %s", exc)
        chosen = None
    return RunLog(
        entries=entries,
        averaged_alpha=avg.tolist(),
        bounds=bounds,
        references=refs,
        selected_checkpoint=chosen,
        final_objective=benefit.objective(avg, bounds, final),
        mode="static" if static else "dynamic",
        seed=config.seed,
    )
