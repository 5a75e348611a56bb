"""Channel frames of specular paths and the rotating two-sphere bistatic scene.

A frame holds ``K`` subcarriers by ``L`` OFDM symbols of the complex channel
transfer function

    H[k, l] = sum_p  g_p * exp(-2j*pi*k*tau_p*df) * exp(+2j*pi*l*alpha_p*dt) + N[k, l]

where ``N`` is circularly symmetric white Gaussian noise.  The scene part
places two point spheres on a beam rotating about a turntable and turns
their positions into bistatic delay and Doppler ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .exceptions import DegenerateGeometryError, RangeError, ValidationError

SPEED_OF_LIGHT = 299792458.0

__all__ = [
    "SPEED_OF_LIGHT",
    "RadarGrid",
    "PathParams",
    "ChannelFrame",
    "Scene",
    "GroundTruth",
    "delay_vector",
    "doppler_vector",
    "synthesize_frame",
    "sphere_positions",
    "sphere_velocities",
    "ground_truth",
    "scene_paths",
    "los_path",
    "frame_mid_time",
    "frame_seeds",
    "synthesize_scene_frame",
    "scene_ground_truth",
    "snr_to_noise_std",
    "default_grid",
    "default_scene",
]


@dataclass(frozen=True)
class RadarGrid:
    """Sampling geometry of a frame.

    Parameters
    ----------
    K : int
        Number of subcarriers.
    L : int
        Number of symbols.
    delta_f : float
        Subcarrier spacing in Hz.
    delta_t : float
        Symbol interval in s.
    """

    K: int
    L: int
    delta_f: float
    delta_t: float

    def __post_init__(self):
        if int(self.K) != self.K or int(self.L) != self.L:
            raise ValidationError(f"K and L must be integers, got K={self.K}, L={self.L}")
        if self.K < 2 or self.L < 2:
            raise ValidationError(f"grid needs K >= 2 and L >= 2, got K={self.K}, L={self.L}")
        for name in ("delta_f", "delta_t"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {value}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "delta_f", float(self.delta_f))
        object.__setattr__(self, "delta_t", float(self.delta_t))

    @classmethod
    def from_resolutions(cls, K, L, delay_resolution, doppler_resolution):
        """Build a grid from its delay and Doppler resolutions."""
        return cls(K, L, 1.0 / (K * delay_resolution), 1.0 / (L * doppler_resolution))

    @property
    def delay_resolution(self) -> float:
        return 1.0 / (self.K * self.delta_f)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.L * self.delta_t)

    @property
    def max_delay(self) -> float:
        """Exclusive upper bound of the unambiguous delay range."""
        return 1.0 / self.delta_f

    @property
    def max_doppler(self) -> float:
        """Exclusive bound on ``|alpha|``."""
        return 0.5 / self.delta_t

    @property
    def frame_duration(self) -> float:
        return self.L * self.delta_t

    def delay_in_range(self, tau) -> bool:
        return bool(0.0 <= tau < self.max_delay)

    def doppler_in_range(self, alpha) -> bool:
        return bool(abs(alpha) < self.max_doppler)


@dataclass(frozen=True)
class PathParams:
    """One specular path: complex weight, delay (s) and Doppler shift (Hz)."""

    weight: complex
    delay: float
    doppler: float

    def __post_init__(self):
        w = complex(self.weight)
        if not (math.isfinite(w.real) and math.isfinite(w.imag)):
            raise ValidationError(f"path weight must be finite, got {self.weight}")
        if not (math.isfinite(self.delay) and math.isfinite(self.doppler)):
            raise ValidationError(
                f"delay and Doppler must be finite, got tau={self.delay}, alpha={self.doppler}"
            )
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "delay", float(self.delay))
        object.__setattr__(self, "doppler", float(self.doppler))

    def check_range(self, grid: RadarGrid, index=None):
        """Raise :class:`RangeError` if the path is outside the grid's unambiguous box."""
        where = "" if index is None else f" (path {index})"
        if not grid.delay_in_range(self.delay):
            raise RangeError(
                f"delay {self.delay:.6g} s outside [0, {grid.max_delay:.6g}){where}", index
            )
        if not grid.doppler_in_range(self.doppler):
            raise RangeError(
                f"Doppler {self.doppler:.6g} Hz outside (-{grid.max_doppler:.6g}, "
                f"{grid.max_doppler:.6g}){where}",
                index,
            )


@dataclass(frozen=True, eq=False)
class ChannelFrame:
    """A ``K x L`` complex observation; rows are subcarriers, columns symbols."""

    grid: RadarGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.complex128, copy=True)
        if data.shape != (self.grid.K, self.grid.L):
            raise ValidationError(
                f"frame data has shape {data.shape}, grid expects {(self.grid.K, self.grid.L)}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("frame data contains non-finite entries")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    def with_data(self, data) -> "ChannelFrame":
        return ChannelFrame(self.grid, data)

    @property
    def energy(self) -> float:
        return float(np.vdot(self.data, self.data).real)


def delay_vector(tau, grid: RadarGrid) -> np.ndarray:
    """Subcarrier phasors ``exp(-2j*pi*k*tau*df)``; shape ``(K,)`` or ``(K, P)`` for array ``tau``."""
    k = np.arange(grid.K)
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2j * np.pi * grid.delta_f * np.multiply.outer(k, tau))


def doppler_vector(alpha, grid: RadarGrid) -> np.ndarray:
    """Symbol phasors ``exp(+2j*pi*l*alpha*dt)``; shape ``(L,)`` or ``(L, P)``."""
    ell = np.arange(grid.L)
    alpha = np.asarray(alpha, dtype=float)
    return np.exp(2j * np.pi * grid.delta_t * np.multiply.outer(ell, alpha))


def _noiseless(paths: Sequence[PathParams], grid: RadarGrid) -> np.ndarray:
    if len(paths) == 0:
        return np.zeros((grid.K, grid.L), dtype=np.complex128)
    for i, p in enumerate(paths):
        if not isinstance(p, PathParams):
            raise ValidationError(f"path {i} is not a PathParams instance")
        p.check_range(grid, i)
    weights = np.array([p.weight for p in paths])
    a = delay_vector([p.delay for p in paths], grid)
    b = doppler_vector([p.doppler for p in paths], grid)
    return (a * weights) @ b.T


def synthesize_frame(
    paths: Sequence[PathParams], grid: RadarGrid, noise_std: float = 0.0, rng_seed=None
) -> ChannelFrame:
    """Evaluate the path model on ``grid`` and add complex white Gaussian noise.

    Real and imaginary noise parts each have variance ``noise_std**2 / 2``.
    The result is deterministic for a fixed ``rng_seed``.
    """
    if not (math.isfinite(noise_std) and noise_std >= 0):
        raise ValidationError(f"noise_std must be finite and >= 0, got {noise_std}")
    data = _noiseless(paths, grid)
    if noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        noise = rng.standard_normal((2, grid.K, grid.L))
        data = data + (noise_std / math.sqrt(2.0)) * (noise[0] + 1j * noise[1])
    return ChannelFrame(grid, data)


def snr_to_noise_std(snr_db: float, path_power: float = 1.0) -> float:
    """Per-sample noise std giving ``snr_db`` for a path of power ``|g|**2``."""
    return math.sqrt(path_power / 10.0 ** (snr_db / 10.0))


def _vec3(v, name):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be a finite 3D position, got {v!r}")
    return tuple(float(x) for x in arr)


@dataclass(frozen=True)
class Scene:
    """TX/RX placement and a turntable carrying two point spheres.

    Sphere ``i`` sits at ``center + R_i * (cos(w t + phi_i), sin(w t + phi_i), 0)``.
    ``noise_std`` is the per-sample noise standard deviation, sphere weights
    have unit magnitude.
    """

    tx_pos: tuple
    rx_pos: tuple
    turntable_center: tuple = (0.0, 0.0, 0.0)
    sphere_radii_from_center: tuple = (1.2, 0.8)
    initial_phases: tuple = (0.0, math.pi)
    rotation_rate: float = 2.0 * math.pi / 0.64
    carrier_wavelength: float = SPEED_OF_LIGHT / 5.8e9
    los_gain_db: float = 0.0
    static_clutter: tuple = ()
    noise_std: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "tx_pos", _vec3(self.tx_pos, "tx_pos"))
        object.__setattr__(self, "rx_pos", _vec3(self.rx_pos, "rx_pos"))
        object.__setattr__(self, "turntable_center", _vec3(self.turntable_center, "turntable_center"))
        radii = tuple(float(r) for r in self.sphere_radii_from_center)
        phases = tuple(float(p) for p in self.initial_phases)
        if len(radii) != 2 or len(phases) != 2:
            raise ValidationError("scene needs exactly two sphere radii and two initial phases")
        if not all(math.isfinite(r) and r > 0 for r in radii) or radii[0] == radii[1]:
            raise ValidationError(f"sphere mount distances must be > 0 and distinct, got {radii}")
        if not all(math.isfinite(p) for p in phases):
            raise ValidationError(f"initial phases must be finite, got {phases}")
        if not math.isfinite(self.rotation_rate):
            raise ValidationError(f"rotation_rate must be finite, got {self.rotation_rate}")
        if not (math.isfinite(self.carrier_wavelength) and self.carrier_wavelength > 0):
            raise ValidationError(f"carrier_wavelength must be > 0, got {self.carrier_wavelength}")
        if not math.isfinite(self.los_gain_db):
            raise ValidationError(f"los_gain_db must be finite, got {self.los_gain_db}")
        if not (math.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ValidationError(f"noise_std must be >= 0, got {self.noise_std}")
        clutter = tuple(self.static_clutter)
        if not all(isinstance(p, PathParams) for p in clutter):
            raise ValidationError("static_clutter must contain PathParams")
        object.__setattr__(self, "sphere_radii_from_center", radii)
        object.__setattr__(self, "initial_phases", phases)
        object.__setattr__(self, "rotation_rate", float(self.rotation_rate))
        object.__setattr__(self, "carrier_wavelength", float(self.carrier_wavelength))
        object.__setattr__(self, "los_gain_db", float(self.los_gain_db))
        object.__setattr__(self, "noise_std", float(self.noise_std))
        object.__setattr__(self, "static_clutter", clutter)

    @property
    def bistatic_angle(self) -> float:
        """Angle TX-center-RX in degrees, measured in the turntable plane, in [0, 360)."""
        c = np.array(self.turntable_center)
        tx = np.array(self.tx_pos) - c
        rx = np.array(self.rx_pos) - c
        az_tx = math.atan2(tx[1], tx[0])
        az_rx = math.atan2(rx[1], rx[0])
        return math.degrees(az_tx - az_rx) % 360.0

    def with_bistatic_angle(self, angle_deg: float, los_gain_db=None) -> "Scene":
        """Return a copy with TX at azimuth ``+angle/2`` and RX at ``-angle/2``.

        Horizontal distances from the turntable center and heights are kept.
        """
        c = np.array(self.turntable_center)
        half = math.radians(angle_deg) / 2.0

        def place(pos, az):
            rel = np.array(pos) - c
            rho = math.hypot(rel[0], rel[1])
            return tuple(c + np.array([rho * math.cos(az), rho * math.sin(az), rel[2]]))

        changes = dict(tx_pos=place(self.tx_pos, half), rx_pos=place(self.rx_pos, -half))
        if los_gain_db is not None:
            changes["los_gain_db"] = los_gain_db
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Sphere delays (s) and Dopplers (Hz), arrays of shape ``(n_frames, 2)``."""

    frames: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    def __len__(self):
        return len(self.frames)

    def for_frame(self, n):
        """``[(tau, alpha), (tau, alpha)]`` for frame index ``n``."""
        row = int(np.flatnonzero(self.frames == n)[0])
        return [(float(self.delays[row, i]), float(self.dopplers[row, i])) for i in range(2)]


def sphere_positions(scene: Scene, t: float) -> np.ndarray:
    """Positions of both spheres at time ``t``, shape ``(2, 3)``."""
    c = np.array(scene.turntable_center)
    out = np.empty((2, 3))
    for i, (r, phi) in enumerate(zip(scene.sphere_radii_from_center, scene.initial_phases)):
        ang = scene.rotation_rate * t + phi
        out[i] = c + r * np.array([math.cos(ang), math.sin(ang), 0.0])
    return out


def sphere_velocities(scene: Scene, t: float) -> np.ndarray:
    """Time derivative of :func:`sphere_positions`, shape ``(2, 3)``."""
    w = scene.rotation_rate
    out = np.empty((2, 3))
    for i, (r, phi) in enumerate(zip(scene.sphere_radii_from_center, scene.initial_phases)):
        ang = w * t + phi
        out[i] = r * w * np.array([-math.sin(ang), math.cos(ang), 0.0])
    return out


def ground_truth(scene: Scene, t: float) -> np.ndarray:
    """Bistatic delay and Doppler of both spheres at time ``t``.

    Returns an array ``[[tau_1, alpha_1], [tau_2, alpha_2]]``.  Delay is the
    TX-sphere-RX path length over ``c``; Doppler is minus the path-length rate
    over the carrier wavelength.
    """
    tx = np.array(scene.tx_pos)
    rx = np.array(scene.rx_pos)
    pos = sphere_positions(scene, t)
    vel = sphere_velocities(scene, t)
    out = np.empty((2, 2))
    for i in range(2):
        to_tx = pos[i] - tx
        to_rx = pos[i] - rx
        d_tx = float(np.linalg.norm(to_tx))
        d_rx = float(np.linalg.norm(to_rx))
        if d_tx == 0.0 or d_rx == 0.0:
            raise DegenerateGeometryError(f"sphere {i} coincides with the TX or RX at t={t}")
        rate = float(vel[i] @ (to_tx / d_tx + to_rx / d_rx))
        out[i, 0] = (d_tx + d_rx) / SPEED_OF_LIGHT
        out[i, 1] = -rate / scene.carrier_wavelength
    return out


def los_path(scene: Scene) -> PathParams:
    dist = float(np.linalg.norm(np.array(scene.tx_pos) - np.array(scene.rx_pos)))
    return PathParams(10.0 ** (scene.los_gain_db / 20.0), dist / SPEED_OF_LIGHT, 0.0)


def scene_paths(scene: Scene, t: float, grid: RadarGrid, seed=None) -> list:
    """LOS, static clutter and both sphere paths at time ``t``.

    Sphere weights have unit magnitude and a phase drawn from
    ``numpy.random.default_rng(seed)``.
    """
    truth = ground_truth(scene, t)
    for i in range(2):
        tau, alpha = truth[i]
        if not (grid.delay_in_range(tau) and grid.doppler_in_range(alpha)):
            raise RangeError(
                f"sphere {i} ground truth (tau={tau:.6g} s, alpha={alpha:.6g} Hz) outside grid range",
                i,
            )
    phases = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=2)
    spheres = [
        PathParams(complex(np.exp(1j * phases[i])), truth[i, 0], truth[i, 1]) for i in range(2)
    ]
    return [los_path(scene), *scene.static_clutter, *spheres]


def frame_mid_time(frame_index: int, grid: RadarGrid) -> float:
    """Frame ``n`` spans ``[n L dt, (n+1) L dt)``; ground truth is taken at its middle."""
    return (frame_index + 0.5) * grid.frame_duration


def frame_seeds(seed: int, frame_index: int):
    """Per-frame ``(phase_seed, noise_seed)`` derived from ``seed + frame_index``."""
    state = np.random.SeedSequence(int(seed) + int(frame_index)).generate_state(2)
    return int(state[0]), int(state[1])


def synthesize_scene_frame(
    scene: Scene, grid: RadarGrid, frame_index: int, seed: int = 0, seed_index=None
):
    """Synthesize frame ``frame_index`` of a scene.

    Random draws use :func:`frame_seeds` with ``seed_index`` (default
    ``frame_index``), so a sweep can give every frame its own stream while
    restarting the time axis for each scene.

    Returns
    -------
    frame : ChannelFrame
    truth : numpy.ndarray
        Sphere ground truth at the frame mid-time, as from :func:`ground_truth`.
    """
    t = frame_mid_time(frame_index, grid)
    phase_seed, noise_seed = frame_seeds(seed, frame_index if seed_index is None else seed_index)
    paths = scene_paths(scene, t, grid, phase_seed)
    frame = synthesize_frame(paths, grid, scene.noise_std, noise_seed)
    return frame, ground_truth(scene, t)


def scene_ground_truth(scene: Scene, grid: RadarGrid, n_frames: int, start: int = 0) -> GroundTruth:
    frames = np.arange(start, start + n_frames)
    truth = np.array([ground_truth(scene, frame_mid_time(n, grid)) for n in frames]).reshape(-1, 2, 2)
    return GroundTruth(frames, truth[:, :, 0], truth[:, :, 1])


def default_grid() -> RadarGrid:
    """1024 x 100 grid with 6.25 ns delay and 156.25 Hz Doppler resolution."""
    return RadarGrid(1024, 100, 156.25e3, 64e-6)


def default_scene(bistatic_angle_deg: float = 20.0, distance: float = 4.0, **kwargs) -> Scene:
    """Turntable at the origin, TX and RX ``distance`` metres away at the given bistatic angle."""
    base = Scene(tx_pos=(distance, 0.0, 0.0), rx_pos=(distance, 0.0, 0.0), **kwargs)
    return base.with_bistatic_angle(bistatic_angle_deg)
