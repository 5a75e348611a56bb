"""Frame preprocessing and the delay-Doppler power spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .signal_model import ChannelFrame, RadarGrid

__all__ = [
    "DelayDopplerSpectrum",
    "background_subtract",
    "hamming",
    "hamming_window",
    "periodogram",
    "complex_spectrum",
]


@dataclass(frozen=True, eq=False)
class DelayDopplerSpectrum:
    """Power on a ``(K*pad_delay) x (L*pad_doppler)`` bin lattice.

    Delay bin ``i`` maps to ``i * delay_resolution / pad_delay``.  Doppler bin
    ``j`` maps to ``wrap(j) * doppler_resolution / pad_doppler`` where bins in
    the upper half of the axis are negative Doppler shifts.
    """

    grid: RadarGrid
    power: np.ndarray
    pad_delay: int = 1
    pad_doppler: int = 1

    def __post_init__(self):
        power = np.array(self.power, dtype=float, copy=True)
        expected = (self.grid.K * self.pad_delay, self.grid.L * self.pad_doppler)
        if power.shape != expected:
            raise ValidationError(f"spectrum shape {power.shape} does not match {expected}")
        if not np.all(np.isfinite(power)) or np.any(power < 0):
            raise ValidationError("spectrum power must be finite and non-negative")
        power.flags.writeable = False
        object.__setattr__(self, "power", power)

    @property
    def shape(self):
        return self.power.shape

    @property
    def delay_bin_width(self) -> float:
        return self.grid.delay_resolution / self.pad_delay

    @property
    def doppler_bin_width(self) -> float:
        return self.grid.doppler_resolution / self.pad_doppler

    def wrap_doppler(self, j):
        """Map Doppler bin(s) in ``[0, n)`` to signed bins in ``[-n/2, n/2)``."""
        n = self.shape[1]
        j = np.asarray(j, dtype=float)
        out = np.where(j >= n / 2.0, j - n, j)
        return float(out) if out.ndim == 0 else out

    def bin_to_params(self, i, j):
        """Fractional bin coordinates to ``(tau, alpha)``."""
        return float(i) * self.delay_bin_width, self.wrap_doppler(j) * self.doppler_bin_width

    def params_to_bin(self, tau, alpha):
        """Nearest bin ``(i, j)`` for a delay and Doppler shift."""
        n_i, n_j = self.shape
        i = int(np.round(tau / self.delay_bin_width)) % n_i
        j = int(np.round(alpha / self.doppler_bin_width)) % n_j
        return i, j


def background_subtract(frame: ChannelFrame) -> ChannelFrame:
    """Remove each subcarrier's mean over symbols (the zero-Doppler subspace)."""
    data = frame.data
    return frame.with_data(data - data.mean(axis=1, keepdims=True))


def hamming(n: int) -> np.ndarray:
    """Symmetric Hamming window ``0.54 - 0.46 cos(2 pi m / (n - 1))``."""
    if n < 2:
        raise ValidationError(f"Hamming window needs n >= 2, got {n}")
    return np.hamming(n)


def hamming_window(frame: ChannelFrame) -> ChannelFrame:
    """Apply separable Hamming tapers along subcarriers and symbols."""
    w_k = hamming(frame.grid.K)
    w_l = hamming(frame.grid.L)
    return frame.with_data(frame.data * np.outer(w_k, w_l))


def complex_spectrum(data: np.ndarray, pad_delay: int = 1, pad_doppler: int = 1) -> np.ndarray:
    """2D transform matched to the path model.

    ``S[i, j] = sum_{k,l} H[k, l] exp(+2j pi k i / (K pd)) exp(-2j pi l j / (L pa))``
    so that a path at delay ``tau`` and Doppler ``alpha`` peaks at
    ``i = tau / dtau * pd`` and ``j = alpha / dalpha * pa (mod L pa)``.
    """
    K, L = data.shape
    n_i, n_j = K * pad_delay, L * pad_doppler
    spec = np.fft.fft(data, n=n_j, axis=1)
    return np.fft.ifft(spec, n=n_i, axis=0) * n_i


def periodogram(
    frame: ChannelFrame, zero_pad_delay: int = 1, zero_pad_doppler: int = 1
) -> DelayDopplerSpectrum:
    """Magnitude-squared delay-Doppler transform of ``frame``."""
    for name, pad in (("zero_pad_delay", zero_pad_delay), ("zero_pad_doppler", zero_pad_doppler)):
        if int(pad) != pad or pad < 1:
            raise ValidationError(f"{name} must be an integer >= 1, got {pad}")
    spec = complex_spectrum(frame.data, int(zero_pad_delay), int(zero_pad_doppler))
    power = spec.real**2 + spec.imag**2
    return DelayDopplerSpectrum(frame.grid, power, int(zero_pad_delay), int(zero_pad_doppler))
