"""Ordered-statistics CFAR on the delay-Doppler spectrum.

Each cell is compared against ``alpha_os`` times the ``r``-th smallest
power in a rectangular reference window around it, with a guard block
around the cell under test left out.  Both spectrum axes are treated as
circular.  Threshold crossings are thinned to 3x3 local maxima and then
refined to sub-bin accuracy by fitting a parabola along each axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ConfigError
from .signal_model import ChannelFrame
from .spectrum import DelayDopplerSpectrum, background_subtract, hamming_window, periodogram

__all__ = [
    "CfarConfig",
    "Detection",
    "reference_mask",
    "ordered_statistic",
    "os_cfar_detect",
    "refine_quadratic",
    "quadratic_offset",
    "cfar_pipeline",
    "design_false_alarm_rate",
]

# rows of the CFAR window processed at once; bounds the gathered block to ~64 MB
_BLOCK_CELLS = 1 << 23


@dataclass(frozen=True)
class CfarConfig:
    m_ref: int = 15
    n_ref: int = 7
    guard_delay: int = 1
    guard_doppler: int = 1
    r: int = 79
    alpha_os: float = 11.39
    interpolation: str = "power"

    def __post_init__(self):
        if self.interpolation not in ("power", "log"):
            raise ConfigError(f"interpolation must be 'power' or 'log', got {self.interpolation!r}")
        for name in ("m_ref", "n_ref"):
            v = getattr(self, name)
            if int(v) != v or v < 3 or v % 2 == 0:
                raise ConfigError(f"{name} must be an odd integer >= 3, got {v}")
        for name, extent in (("guard_delay", self.m_ref), ("guard_doppler", self.n_ref)):
            g = getattr(self, name)
            if int(g) != g or g < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {g}")
            if 2 * g + 1 >= extent:
                raise ConfigError(f"guard block 2*{name}+1={2 * g + 1} must be smaller than {extent}")
        if int(self.r) != self.r or not 1 <= self.r <= self.n_reference_cells:
            raise ConfigError(
                f"rank r={self.r} must lie in [1, {self.n_reference_cells}] "
                f"(reference cells of a {self.m_ref}x{self.n_ref} window minus guard)"
            )
        if not (np.isfinite(self.alpha_os) and self.alpha_os > 0):
            raise ConfigError(f"alpha_os must be > 0, got {self.alpha_os}")

    @property
    def n_reference_cells(self) -> int:
        guard = (2 * self.guard_delay + 1) * (2 * self.guard_doppler + 1)
        return self.m_ref * self.n_ref - guard


@dataclass(frozen=True)
class Detection:
    """A CFAR hit.  ``degenerate`` marks axes where the parabola fit had no peak."""

    delay_bin: int
    doppler_bin: int
    tau_hat: float
    alpha_hat: float
    power: float
    threshold: float
    offset_delay: float = 0.0
    offset_doppler: float = 0.0
    degenerate: bool = False
    refined: bool = False


def reference_mask(config: CfarConfig) -> np.ndarray:
    """Boolean ``m_ref x n_ref`` mask of the reference cells."""
    mask = np.ones((config.m_ref, config.n_ref), dtype=bool)
    ci, cj = config.m_ref // 2, config.n_ref // 2
    mask[
        ci - config.guard_delay : ci + config.guard_delay + 1,
        cj - config.guard_doppler : cj + config.guard_doppler + 1,
    ] = False
    return mask


def ordered_statistic(power: np.ndarray, config: CfarConfig) -> np.ndarray:
    """``r``-th smallest reference-cell value around every cell (circular edges)."""
    power = np.asarray(power, dtype=float)
    n_i, n_j = power.shape
    if config.m_ref > n_i or config.n_ref > n_j:
        raise ConfigError(
            f"reference window {config.m_ref}x{config.n_ref} larger than spectrum {n_i}x{n_j}"
        )
    hm, hn = config.m_ref // 2, config.n_ref // 2
    ext = np.pad(power, ((hm, hm), (hn, hn)), mode="wrap")
    windows = sliding_window_view(ext, (config.m_ref, config.n_ref))
    mask = reference_mask(config)
    k = config.r - 1
    out = np.empty_like(power)
    rows = max(1, _BLOCK_CELLS // (n_j * config.n_reference_cells))
    for start in range(0, n_i, rows):
        block = windows[start : start + rows][:, :, mask]
        out[start : start + rows] = np.partition(block, k, axis=-1)[..., k]
    return out


def _local_maxima(power: np.ndarray) -> np.ndarray:
    """Cells that beat all 8 circular neighbours; equal neighbours lose to the lower index."""
    n_i, n_j = power.shape
    ii, jj = np.indices(power.shape)
    keep = np.ones(power.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = np.roll(power, (-di, -dj), axis=(0, 1))
            ni = (ii + di) % n_i
            nj = (jj + dj) % n_j
            lower_index = (ii < ni) | ((ii == ni) & (jj < nj))
            keep &= (power > nb) | ((power == nb) & lower_index)
    return keep


def os_cfar_detect(spectrum: DelayDopplerSpectrum, config: CfarConfig) -> list:
    """Unrefined detections: threshold crossings that are 3x3 local maxima."""
    power = spectrum.power
    threshold = config.alpha_os * ordered_statistic(power, config)
    hits = (power > threshold) & _local_maxima(power)
    out = []
    for i, j in zip(*np.nonzero(hits)):
        tau, alpha = spectrum.bin_to_params(i, j)
        out.append(
            Detection(int(i), int(j), tau, alpha, float(power[i, j]), float(threshold[i, j]))
        )
    return out


def quadratic_offset(s_minus: float, s_zero: float, s_plus: float):
    """Vertex offset of the parabola through three samples, clamped to ``[-0.5, 0.5]``.

    Returns ``(offset, degenerate)``; ``degenerate`` is set when the samples
    do not curve downwards, in which case the offset is 0.
    """
    denom = s_minus - 2.0 * s_zero + s_plus
    if not denom < 0.0:
        return 0.0, True
    d = 0.5 * (s_minus - s_plus) / denom
    if math.isnan(d):
        # both neighbours infinitely far below the peak (log of zero power)
        return 0.0, False
    return float(min(0.5, max(-0.5, d))), False


def refine_quadratic(spectrum: DelayDopplerSpectrum, detection: Detection, scale: str = "power") -> Detection:
    """Sub-bin parabola refinement along each axis.

    ``scale="power"`` fits the parabola to the power samples themselves;
    ``scale="log"`` fits it to their logarithm, which is nearly unbiased for
    a Hamming-windowed main lobe (the power fit pulls the estimate towards
    the bin centre by up to an eighth of a bin).
    """
    p = spectrum.power
    if scale == "log":
        with np.errstate(divide="ignore"):
            p = np.log(p)
    elif scale != "power":
        raise ValueError(f"scale must be 'power' or 'log', got {scale!r}")
    n_i, n_j = p.shape
    i, j = detection.delay_bin, detection.doppler_bin
    d_tau, bad_tau = quadratic_offset(p[(i - 1) % n_i, j], p[i, j], p[(i + 1) % n_i, j])
    d_alpha, bad_alpha = quadratic_offset(p[i, (j - 1) % n_j], p[i, j], p[i, (j + 1) % n_j])
    tau_hat = ((i + d_tau) % n_i) * spectrum.delay_bin_width
    alpha_hat = spectrum.wrap_doppler((j + d_alpha) % n_j) * spectrum.doppler_bin_width
    return replace(
        detection,
        tau_hat=float(tau_hat),
        alpha_hat=float(alpha_hat),
        offset_delay=d_tau,
        offset_doppler=d_alpha,
        degenerate=bad_tau or bad_alpha,
        refined=True,
    )


def cfar_pipeline(
    frame: ChannelFrame,
    config: CfarConfig = CfarConfig(),
    background_subtraction: bool = True,
    window: bool = True,
) -> list:
    """Full detector chain; refined detections sorted by descending power.

    Spectrum cells at the floating-point round-off level of the input
    (below ``(64 eps)**2`` times its energy) are zeroed first, so exactly
    cancelled static paths cannot seed detections.
    """
    floor = (64.0 * np.finfo(float).eps) ** 2 * frame.energy
    if background_subtraction:
        frame = background_subtract(frame)
    if window:
        frame = hamming_window(frame)
    spectrum = periodogram(frame)
    if floor > 0.0:
        power = np.where(spectrum.power > floor, spectrum.power, 0.0)
        spectrum = DelayDopplerSpectrum(spectrum.grid, power)
    found = [refine_quadratic(spectrum, d, config.interpolation) for d in os_cfar_detect(spectrum, config)]
    return sorted(found, key=lambda d: -d.power)


def design_false_alarm_rate(config: CfarConfig) -> float:
    """Per-cell false-alarm probability for i.i.d. exponential noise.

    ``prod_{i=0}^{r-1} (N - i) / (N - i + alpha_os)`` with ``N`` reference cells.
    """
    n = config.n_reference_cells
    i = np.arange(config.r)
    return float(np.exp(np.sum(np.log(n - i) - np.log(n - i + config.alpha_os))))
