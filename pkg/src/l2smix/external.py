"""Drive an out-of-process trainer over line-delimited JSON on stdio.

Requests (one in flight at a time)::

    {"cmd": "train", "steps": n, "alpha": [a1, a2], "seed": s}  ->  {"ok": true}
    {"cmd": "evaluate"}  ->  {"accuracy": x, "mean_tokens": y, "sample_count": k, "checkpoint_id": "..."}
    {"cmd": "shutdown"}  ->  child exits
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
import threading
from collections import deque
from queue import Empty, Queue

import numpy as np

from .benefit import ValidationReport
from .errors import ProtocolError

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 86_400.0
_EOF = object()


def window_seed(seed: int, step: int) -> int:
    """Per-window seed sent with each train command (fits in a signed 64-bit int)."""
    ss = np.random.SeedSequence([seed & (2**64 - 1), step])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


class ExternalTrainer:
    def __init__(self, command, seed: int = 0, timeout: float = DEFAULT_TIMEOUT, env=None, cwd=None):
        self.command = list(command)
        self.seed = seed
        self.timeout = timeout
        self.step = 0
        self.transcript: deque[str] = deque(maxlen=50)
        self._stderr: deque[str] = deque(maxlen=20)
        self._lines: Queue = Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=env,
                cwd=cwd,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot launch trainer {self.command!r}: {exc}") from exc
        threading.Thread(target=self._pump_stdout, daemon=True).start()
        threading.Thread(target=self._pump_stderr, daemon=True).start()

    def _pump_stdout(self):
        for line in self._proc.stdout:
            self._lines.put(line.rstrip("\n"))
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self._proc.stderr:
            self._stderr.append(line.rstrip("\n"))

    def _fail(self, message):
        if self._stderr:
            message += f"; stderr: {' | '.join(self._stderr)}"
        self.kill()
        raise ProtocolError(message, self.transcript)

    def request(self, payload: dict) -> dict:
        line = json.dumps(payload, separators=(",", ":"))
        self.transcript.append(f"> {line}")
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            self._fail(f"trainer closed its input before {payload['cmd']!r} (exit code {self._proc.poll()})")
        while True:
            try:
                reply = self._lines.get(timeout=self.timeout)
            except Empty:
                self._fail(f"no reply to {payload['cmd']!r} within {self.timeout:g}s")
            if reply is _EOF:
                self._fail(f"trainer exited while handling {payload['cmd']!r} (exit code {self._proc.wait()})")
            if reply.strip():
                break
        self.transcript.append(f"< {reply}")
        try:
            obj = json.loads(reply)
        except json.JSONDecodeError:
            self._fail(f"non-JSON reply to {payload['cmd']!r}: {reply!r}")
        if not isinstance(obj, dict):
            self._fail(f"reply to {payload['cmd']!r} is not a JSON object: {reply!r}")
        return obj

    def train(self, steps: int, alpha):
        payload = {
            "cmd": "train",
            "steps": int(steps),
            "alpha": [float(a) for a in alpha],
            "seed": window_seed(self.seed, self.step),
        }
        reply = self.request(payload)
        if reply.get("ok") is not True:
            self._fail(f"train not acknowledged: {json.dumps(reply)}")
        self.step += int(steps)

    def evaluate(self) -> tuple[ValidationReport, str]:
        reply = self.request({"cmd": "evaluate"})
        acc = reply.get("accuracy")
        tok = reply.get("mean_tokens")
        k = reply.get("sample_count")
        ckpt = reply.get("checkpoint_id")
        if not _is_real(acc) or not 0.0 <= acc <= 1.0:
            self._fail(f"accuracy out of range: {acc!r}")
        if not _is_real(tok) or tok < 0:
            self._fail(f"mean_tokens out of range: {tok!r}")
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            self._fail(f"sample_count must be a positive integer: {k!r}")
        if not isinstance(ckpt, str) or not ckpt:
            self._fail(f"checkpoint_id must be a non-empty string: {ckpt!r}")
        return ValidationReport(float(acc), float(tok), k, self.step), ckpt

    def close(self, timeout: float = 10.0):
        """Send shutdown and wait for the child to exit; returns its exit code."""
        if self._proc.poll() is None:
            line = json.dumps({"cmd": "shutdown"})
            self.transcript.append(f"> {line}")
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (BrokenPipeError, OSError, ValueError):
                pass
            try:
                self._proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                log.warning("trainer ignored shutdown; killing it")
                self.kill()
        return self._proc.returncode

    def kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    @property
    def returncode(self):
        return self._proc.poll()


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
