"""Fourier peak summaries of trajectories.

A trajectory channel is mapped to its 1/N-normalized DFT coefficients. Each
:class:`PeakSpec` then picks the largest (or smallest) real or imaginary part
inside a frequency band and reports both the extremal value and the
frequency at which it occurs, so ``m = 2 * n_specs``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, SpecError
from .model import Trajectory

__all__ = [
    "PeakSpec",
    "SummarySpec",
    "dft_coefficients",
    "extract_peaks",
    "summarize",
    "summarize_batch",
    "default_bands",
    "default_spec",
]

# Band edges in Hz for the default 12-summary layout, and the DFT bin
# ranges (inclusive) used at other sampling rates. The bin form starts at
# bin 1 so the DC offset never counts as a spectral peak.
BANDS_HZ = ((0.0, 1.59), (1.71, 5.98))
BANDS_BINS = ((1, 14), (15, 50))

_FREQ_TOL = 1e-9


@dataclass(frozen=True)
class PeakSpec:
    part: str  # "real" | "imag"
    band: tuple[float, float]
    direction: str  # "max" | "min"

    def __post_init__(self):
        if self.part not in ("real", "imag"):
            raise SpecError(f"part must be 'real' or 'imag', got {self.part!r}")
        if self.direction not in ("max", "min"):
            raise SpecError(f"direction must be 'max' or 'min', got {self.direction!r}")
        lo, hi = (float(x) for x in self.band)
        if not (0.0 <= lo <= hi):
            raise SpecError(f"invalid band {self.band}")
        object.__setattr__(self, "band", (lo, hi))

    def label(self, channel: int) -> str:
        lo, hi = self.band
        return f"ch{channel}:{self.part}:{lo:g}-{hi:g}Hz:{self.direction}"

    def to_dict(self) -> dict:
        return {"part": self.part, "band": list(self.band), "direction": self.direction}


@dataclass(frozen=True)
class SummarySpec:
    """Per-channel peak specifications; channel ``c`` uses ``channels[c]``."""

    channels: tuple[tuple[PeakSpec, ...], ...]

    def __post_init__(self):
        chans = tuple(tuple(c) for c in self.channels)
        if not chans or not any(chans):
            raise SpecError("a summary spec needs at least one peak")
        object.__setattr__(self, "channels", chans)

    @property
    def m(self) -> int:
        return 2 * sum(len(c) for c in self.channels)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def labels(self) -> list[str]:
        out = []
        for c, specs in enumerate(self.channels):
            for p in specs:
                out += [p.label(c) + ":value", p.label(c) + ":freq"]
        return out

    def validate(self, n: int, dt: float) -> None:
        nyquist = 0.5 / dt
        freqs = np.arange(n) / (n * dt)
        for specs in self.channels:
            for p in specs:
                lo, hi = p.band
                if hi > nyquist + _FREQ_TOL:
                    raise SpecError(f"band {p.band} exceeds the Nyquist frequency {nyquist:g} Hz")
                if not np.any(_band_mask(freqs, p.band, nyquist)):
                    raise SpecError(f"band {p.band} contains no DFT bin (spacing {1 / (n * dt):g} Hz)")

    def to_dict(self) -> dict:
        return {"channels": [[p.to_dict() for p in c] for c in self.channels]}

    @classmethod
    def from_dict(cls, d) -> "SummarySpec":
        return cls(tuple(
            tuple(PeakSpec(p["part"], tuple(p["band"]), p["direction"]) for p in c) for c in d["channels"]
        ))


def _band_mask(freqs: np.ndarray, band, nyquist: float) -> np.ndarray:
    lo, hi = band
    return (freqs >= lo - _FREQ_TOL) & (freqs <= hi + _FREQ_TOL) & (freqs <= nyquist + _FREQ_TOL)


def default_bands(n: int, dt: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """The low/high peak bands for a record of ``n`` samples at spacing ``dt``.

    The fixed Hz bands are used when they fit under the Nyquist frequency;
    otherwise the same DFT term ranges are translated to this sampling rate
    (and clipped at Nyquist).
    """
    nyquist = 0.5 / dt
    if BANDS_HZ[1][1] <= nyquist:
        return BANDS_HZ
    df = 1.0 / (n * dt)
    kmax = n // 2
    bands = []
    for k_lo, k_hi in BANDS_BINS:
        k_lo, k_hi = min(k_lo, kmax), min(k_hi, kmax)
        bands.append((k_lo * df, k_hi * df))
    return tuple(bands)


def default_spec(n: int = 128, dt: float = 0.1, n_channels: int = 1,
                 bands=None) -> SummarySpec:
    """Six peaks on the first channel (m = 12) and five on each extra one."""
    b1, b2 = default_bands(n, dt) if bands is None else bands
    y = (
        PeakSpec("real", b1, "max"),
        PeakSpec("real", b1, "min"),
        PeakSpec("real", b2, "max"),
        PeakSpec("real", b2, "min"),
        PeakSpec("imag", b1, "min"),
        PeakSpec("imag", b2, "max"),
    )
    z = (
        PeakSpec("real", b1, "max"),
        PeakSpec("real", b1, "min"),
        PeakSpec("real", b2, "max"),
        PeakSpec("imag", b1, "min"),
        PeakSpec("imag", b2, "max"),
    )
    return SummarySpec((y,) + (z,) * (n_channels - 1))


def dft_coefficients(traj: Trajectory, channel: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies ``k / (N dt)`` and coefficients ``C_k`` (normalized by 1/N)."""
    if not 0 <= channel < traj.n_channels:
        raise DomainError(f"channel {channel} does not exist")
    y = traj.channels[channel]
    n = y.size
    return np.arange(n) / (n * traj.dt), np.fft.fft(y) / n


def extract_peaks(frequencies, coefficients, specs: Sequence[PeakSpec]) -> np.ndarray:
    """``[value_1, freq_1, value_2, freq_2, ...]`` for each spec in order.

    Ties in the extremal value resolve to the lowest frequency.
    """
    freqs = np.asarray(frequencies, dtype=float)
    coefs = np.asarray(coefficients)
    out = np.empty((1, 2 * len(specs)))
    nyquist = 0.5 * freqs.size * (freqs[1] - freqs[0]) if freqs.size > 1 else np.inf
    _peaks_into(out, freqs, coefs[None, :], specs, nyquist)
    return out[0]


def _peaks_into(out, freqs, coefs, specs, nyquist):
    for s, p in enumerate(specs):
        mask = _band_mask(freqs, p.band, nyquist)
        idx = np.nonzero(mask)[0]
        if idx.size == 0:
            raise SpecError(f"band {p.band} contains no DFT bin")
        sub = coefs[:, idx]
        vals = sub.real if p.part == "real" else sub.imag
        # argmax/argmin return the first hit; bins are ascending in frequency
        pos = np.argmax(vals, axis=1) if p.direction == "max" else np.argmin(vals, axis=1)
        out[:, 2 * s] = vals[np.arange(vals.shape[0]), pos]
        out[:, 2 * s + 1] = freqs[idx[pos]]


def summarize(traj: Trajectory, spec: SummarySpec) -> np.ndarray:
    return summarize_batch(traj.channels[None], traj.dt, spec)[0]


def summarize_batch(outputs: np.ndarray, dt: float, spec: SummarySpec) -> np.ndarray:
    """Summaries for a stack of outputs of shape ``(k, channels, N)``; returns ``(k, m)``."""
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim == 2:
        outputs = outputs[:, None, :]
    k, n_ch, n = outputs.shape
    if n_ch < spec.n_channels:
        raise DomainError(f"spec needs {spec.n_channels} channels, trajectory has {n_ch}")
    if not np.all(np.isfinite(outputs)):
        raise DomainError("trajectories contain non-finite values")
    spec.validate(n, dt)
    freqs = np.arange(n) / (n * dt)
    nyquist = 0.5 / dt
    out = np.empty((k, spec.m))
    col = 0
    for c, specs in enumerate(spec.channels):
        if not specs:
            continue
        coefs = np.fft.fft(outputs[:, c, :], axis=1) / n
        width = 2 * len(specs)
        _peaks_into(out[:, col:col + width], freqs, coefs, specs, nyquist)
        col += width
    return out
