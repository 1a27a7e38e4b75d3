"""Child-process integrand protocol.

The harness starts the evaluator once, writes one point per line
(space-separated decimals) to its standard input, flushes, and reads one
decimal per line back.  The child must exit with status 0 after its input
is closed.
"""

from __future__ import annotations

import shlex
import subprocess

import numpy as np

from ..exceptions import ProbcubError


class ExternalIntegrandError(ProbcubError, OSError):
    """The evaluator misbehaved: bad output, early exit or nonzero status."""


class ExternalIntegrand:
    def __init__(self, command, timeout: float = 600.0):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ExternalIntegrandError("empty evaluator command")
        self.timeout = timeout
        self.calls = 0

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        try:
            proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, bufsize=1,
            )
        except OSError as exc:
            raise ExternalIntegrandError(f"cannot start evaluator: {exc}") from exc
        out = np.empty(X.shape[0])
        try:
            for i, x in enumerate(X):
                proc.stdin.write(" ".join(repr(float(v)) for v in x) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
                if not line:
                    raise ExternalIntegrandError(f"evaluator closed its output after {i} values")
                try:
                    out[i] = float(line.strip())
                except ValueError as exc:
                    raise ExternalIntegrandError(f"evaluator returned {line.strip()!r}") from exc
            proc.stdin.close()
            status = proc.wait(timeout=self.timeout)
        except BrokenPipeError as exc:
            raise ExternalIntegrandError("evaluator exited early") from exc
        finally:
            if proc.poll() is None:
                proc.kill()
                proc.wait()
        if status != 0:
            raise ExternalIntegrandError(f"evaluator exited with status {status}")
        self.calls += X.shape[0]
        return out
