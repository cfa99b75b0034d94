"""Simulator contract and the ``osc2`` synthetic benchmark.

``osc2`` stands in for an expensive black-box model. Its output is a
two-tone oscillation driven by the aleatory vector ``a`` and the epistemic
vector ``e``::

    y(t) = e1 (0.5 + a1) sin(2 pi f1 t dt + 2 pi a2)
           + 0.4 e2 (0.5 + a3) cos(2 pi 2.5 t dt)
           + 0.01 e4,            f1 = 0.9 + 0.1 e3

``e4`` only enters through a tiny constant offset, so it is nearly
non-identifiable by construction. Two optional extra channels (``z1``,
``z2``) provide additional response data for multi-channel calibration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .rng import substream

__all__ = [
    "Box",
    "Trajectory",
    "Osc2",
    "OSC2",
    "simulate",
    "evaluate_requirements",
    "sample_uniform_box",
    "sample_truth",
]

_BOX_TOL = 1e-12


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower, upper]`` with strictly positive widths."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        if len(lo) != len(hi) or not lo:
            raise DomainError("box bounds must be nonempty and of equal length")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise DomainError("box bounds must be finite")
        if any(l >= u for l, u in zip(lo, hi)):
            raise DomainError(f"box needs lower < upper in every dimension, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, x, tol: float = _BOX_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            return False
        return bool(
            np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol)
        )

    def check(self, x, name: str = "point") -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"{name} has dimension {x.shape[-1]}, box has {self.dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{name} has non-finite components")
        if not self.contains(x):
            raise DomainError(f"{name} {np.round(x, 6).tolist()} lies outside {self}")
        return x

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d) -> "Box":
        return cls(tuple(d["lower"]), tuple(d["upper"]))


@dataclass(frozen=True)
class Trajectory:
    """A sampled output record; ``channels`` has shape ``(n_channels, T + 1)``."""

    channels: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if ch.ndim != 2:
            raise DomainError("channels must be a list of equal-length series")
        if ch.shape[1] < 2:
            raise DomainError("a trajectory needs at least 2 time steps")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.t0 == other.t0
            and self.channels.shape == other.channels.shape
            and np.array_equal(self.channels, other.channels)
        )

    __hash__ = None


@dataclass(frozen=True)
class Marginal:
    """A named one-dimensional distribution: ``uniform`` or ``beta``."""

    name: str
    params: tuple[float, ...] = ()

    def draw(self, rng: np.random.Generator, lo: float, hi: float) -> float:
        if self.name == "uniform":
            return rng.uniform(lo, hi)
        if self.name == "beta":
            return lo + (hi - lo) * rng.beta(*self.params)
        raise DomainError(f"unknown marginal {self.name!r}")

    def mean(self, lo: float, hi: float) -> float:
        if self.name == "uniform":
            return 0.5 * (lo + hi)
        a, b = self.params
        return lo + (hi - lo) * a / (a + b)


@dataclass(frozen=True)
class SyntheticTruth:
    e_true: tuple[float, ...]
    marginals: tuple[Marginal, ...]


@dataclass(frozen=True)
class Osc2:
    """The two-tone benchmark. Stateless; safe to share across threads."""

    A: Box = field(default_factory=lambda: Box.cube(0.0, 1.0, 3))
    E0: Box = field(default_factory=lambda: Box.cube(0.0, 2.0, 4))
    T: int = 127
    dt: float = 0.1
    n_channels: int = 1
    truth: SyntheticTruth = field(
        default_factory=lambda: SyntheticTruth(
            e_true=(0.5, 1.0, 0.3, 1.7),
            marginals=(Marginal("beta", (2.0, 5.0)), Marginal("uniform"), Marginal("beta", (5.0, 2.0))),
        )
    )
    design_dim: int = 2
    name: str = "osc2"

    def simulate_batch(self, a_points, e, theta=None, T: int | None = None, dt: float | None = None,
                       check: bool = True) -> np.ndarray:
        """Vectorized simulation; returns an array of shape ``(k, n_channels, T + 1)``.

        ``theta`` is accepted for contract compatibility; osc2 outputs do not
        depend on the design.
        """
        T = self.T if T is None else int(T)
        dt = self.dt if dt is None else float(dt)
        if T < 2:
            raise DomainError("T must be at least 2")
        if not dt > 0:
            raise DomainError("dt must be positive")
        a = np.atleast_2d(np.asarray(a_points, dtype=float))
        e = np.asarray(e, dtype=float)
        if check:
            self.A.check(a, "a")
            self.E0.check(e, "e")
        tt = np.arange(T + 1) * dt
        a1, a2, a3 = a[:, 0:1], a[:, 1:2], a[:, 2:3]
        e1, e2, e3, e4 = e
        f1 = 0.9 + 0.1 * e3
        y = (
            e1 * (0.5 + a1) * np.sin(2 * np.pi * f1 * tt + 2 * np.pi * a2)
            + 0.4 * e2 * (0.5 + a3) * np.cos(2 * np.pi * 2.5 * tt)
            + 0.01 * e4
        )
        out = [y]
        if self.n_channels >= 2:
            out.append(0.5 * e2 * (0.5 + a1) * np.sin(2 * np.pi * 1.5 * tt + 2 * np.pi * a2))
        if self.n_channels >= 3:
            out.append(0.3 * e3 * (0.5 + a3) * np.cos(2 * np.pi * 3.0 * tt) + 0.2 * e1 * a2)
        return np.stack(out, axis=1)

    def simulate(self, a, e, theta=None, T: int | None = None, dt: float | None = None) -> Trajectory:
        a = np.asarray(a, dtype=float)
        if a.ndim != 1:
            raise DomainError("simulate takes a single aleatory point")
        y = self.simulate_batch(a[None, :], e, theta, T, dt)[0]
        return Trajectory(y, self.dt if dt is None else dt)

    def requirements_batch(self, a_points, e, theta) -> np.ndarray:
        """Requirement values ``(g1, g2, g3)`` per point, shape ``(k, 3)``.

        Requirement ``i`` fails when ``g_i >= 0``.
        """
        a = np.atleast_2d(np.asarray(a_points, dtype=float))
        e = np.asarray(e, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.design_dim,):
            raise DomainError(f"theta must have dimension {self.design_dim}, got shape {theta.shape}")
        if a.shape[1] != self.A.dim or e.shape != (self.E0.dim,):
            raise DomainError("a or e has the wrong dimension")
        g1 = e[0] * (0.5 + a[:, 0]) - theta[0]
        g2 = 0.4 * e[1] * (0.5 + a[:, 2]) - theta[1]
        g3 = g1 + g2 - 0.1
        return np.stack([g1, g2, g3], axis=1)

    def evaluate_requirements(self, a, e, theta) -> np.ndarray:
        return self.requirements_batch(np.asarray(a, dtype=float)[None, :], e, theta)[0]

    def sample_truth(self, n: int, seed: int) -> np.ndarray:
        """``n`` aleatory points from the ground-truth marginals (shape ``(n, 3)``)."""
        if n < 1:
            raise DomainError("n must be at least 1")
        out = np.empty((n, self.A.dim))
        for j in range(n):
            rng = substream(seed, "truth", j)
            out[j] = [
                m.draw(rng, lo, hi) for m, lo, hi in zip(self.truth.marginals, self.A.lower, self.A.upper)
            ]
        return out

    def with_channels(self, n_channels: int) -> "Osc2":
        if n_channels not in (1, 2, 3):
            raise DomainError("osc2 supports 1 to 3 channels")
        return Osc2(self.A, self.E0, self.T, self.dt, n_channels, self.truth, self.design_dim)


OSC2 = Osc2()


def simulate(a, e, design=None, T: int = 127, dt: float = 0.1, model: Osc2 = OSC2) -> Trajectory:
    return model.simulate(a, e, design, T, dt)


def evaluate_requirements(a, e, theta, model: Osc2 = OSC2) -> np.ndarray:
    return model.evaluate_requirements(a, e, theta)


def sample_uniform_box(box: Box, n: int, seed: int, stream: str = "uniform",
                       prefix: tuple[int, ...] = ()) -> np.ndarray:
    """``n`` i.i.d. uniform points in ``box``, shape ``(n, dim)``.

    Point ``j`` is drawn from substream ``(seed, stream, *prefix, j)``, so any
    subset of indices can be regenerated independently.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    lo = np.asarray(box.lower)
    w = box.widths
    out = np.empty((n, box.dim))
    for j in range(n):
        out[j] = lo + w * substream(seed, stream, *prefix, j).random(box.dim)
    return out


def sample_truth(n: int, seed: int, model: Osc2 = OSC2) -> np.ndarray:
    return model.sample_truth(n, seed)


def simulate_many(model, a_points: np.ndarray, e_points: Sequence, theta=None) -> np.ndarray:
    """Simulate every ``a`` at every ``e``; shape ``(n_e, k, channels, T + 1)``."""
    return np.stack([model.simulate_batch(a_points, e, theta) for e in e_points])
