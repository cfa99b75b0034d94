"""Drive a third-party simulator over a line-oriented subprocess protocol.

Request (one line)::

    SIM <T> <dt> <dim_a> a... <dim_e> e... [<dim_theta> theta...]

Response::

    OK <channels> <len>
    <len whitespace-separated floats>     (one line per channel)

or ``ERR <message>``. ``len`` must equal ``T + 1``.
"""
from __future__ import annotations

import queue
import shlex
import subprocess
import threading
from typing import Sequence

import numpy as np

from .errors import DomainError, ProtocolError, TransportError
from .model import Box, Trajectory

__all__ = ["ExternalSimulator", "external_simulate", "format_request"]


def _fmt(x: float) -> str:
    return repr(float(x))


def format_request(a, e, theta, T: int, dt: float) -> str:
    a = np.asarray(a, dtype=float).ravel()
    e = np.asarray(e, dtype=float).ravel()
    parts = ["SIM", str(int(T)), _fmt(dt), str(a.size), *map(_fmt, a), str(e.size), *map(_fmt, e)]
    if theta is not None:
        theta = np.asarray(theta, dtype=float).ravel()
        parts += [str(theta.size), *map(_fmt, theta)]
    return " ".join(parts)


class ExternalSimulator:
    """A persistent child process answering ``SIM`` requests.

    Requests are serialized per instance. Use as a context manager or call
    :meth:`close` when done.
    """

    def __init__(self, command: str | Sequence[str], timeout: float = 30.0,
                 A: Box | None = None, E0: Box | None = None, T: int = 127, dt: float = 0.1,
                 n_channels: int | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = float(timeout)
        self.A, self.E0 = A, E0
        self.T, self.dt = int(T), float(dt)
        self.n_channels = n_channels
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, bufsize=1,
            )
        except OSError as exc:
            raise TransportError(f"cannot start simulator {self.command!r}: {exc}") from exc
        self._lines = queue.Queue()
        t = threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True)
        t.start()

    @staticmethod
    def _pump(stream, q):
        for line in stream:
            q.put(line)
        q.put(None)

    def _readline(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise TransportError(f"simulator timed out after {self.timeout}s") from None
        if line is None:
            self._proc.wait()
            code = self._proc.returncode
            err = self._proc.stderr.read().strip() if self._proc.stderr else ""
            self._proc = None
            raise TransportError(f"simulator exited (code {code}) mid-stream; stderr: {err[-500:]!r}")
        return line

    def request(self, a, e, theta=None, T: int | None = None, dt: float | None = None) -> Trajectory:
        T = self.T if T is None else int(T)
        dt = self.dt if dt is None else float(dt)
        if T < 2:
            raise DomainError("T must be at least 2")
        if self.A is not None:
            self.A.check(a, "a")
        if self.E0 is not None:
            self.E0.check(e, "e")
        line = format_request(a, e, theta, T, dt)
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"simulator pipe closed: {exc}") from exc
            head = self._readline().split()
            if not head:
                raise ProtocolError("empty response header")
            if head[0] == "ERR":
                raise ProtocolError("simulator error: " + " ".join(head[1:]))
            if head[0] != "OK" or len(head) != 3:
                raise ProtocolError(f"malformed response header {' '.join(head)!r}")
            try:
                n_ch, length = int(head[1]), int(head[2])
            except ValueError:
                raise ProtocolError(f"malformed response header {' '.join(head)!r}") from None
            rows = [self._readline() for _ in range(n_ch)]
        if length != T + 1:
            raise ProtocolError(f"declared length {length} but T + 1 = {T + 1}")
        channels = []
        for c, row in enumerate(rows):
            try:
                vals = np.array([float(x) for x in row.split()])
            except ValueError:
                raise ProtocolError(f"channel {c} has non-numeric entries") from None
            if vals.size != length:
                raise ProtocolError(f"channel {c} has {vals.size} values, expected {length}")
            channels.append(vals)
        if self.n_channels is not None and n_ch != self.n_channels:
            raise ProtocolError(f"expected {self.n_channels} channels, got {n_ch}")
        return Trajectory(np.array(channels), dt)

    # Contract shared with Osc2 so the calibration pipeline can use either.
    def simulate(self, a, e, theta=None, T=None, dt=None) -> Trajectory:
        return self.request(a, e, theta, T, dt)

    def simulate_batch(self, a_points, e, theta=None, T=None, dt=None, check: bool = True) -> np.ndarray:
        return np.stack([self.request(a, e, theta, T, dt).channels for a in np.atleast_2d(a_points)])

    def close(self):
        proc, self._proc = self._proc, None
        if proc is not None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_simulate(endpoint, a, e, theta=None, T: int = 127, dt: float = 0.1,
                      timeout: float = 30.0) -> Trajectory:
    """One-shot request. ``endpoint`` is a command string/list or an open simulator."""
    if isinstance(endpoint, ExternalSimulator):
        return endpoint.request(a, e, theta, T, dt)
    with ExternalSimulator(endpoint, timeout=timeout) as sim:
        return sim.request(a, e, theta, T, dt)
