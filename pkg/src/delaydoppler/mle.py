"""Iterative maximum-likelihood estimation of specular paths.

The estimator alternates between proposing a path from the residual
periodogram, jointly refining every path with a damped Gauss-Newton
iteration, and checking the newest path against its Cramer-Rao bound.
Accepted paths are cancelled from the data and the loop continues on the
residual.

Internally delays and Dopplers are handled in units of grid bins
(``tau / delay_resolution`` and ``alpha / doppler_resolution``), which keeps
the normal equations well scaled.  When background subtraction is active
the model atoms are projected the same way as the data, i.e. their mean
over symbols is removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import (
    ConfigError,
    IllConditionedError,
    NoCandidate,
    NumericalError,
    SingularFisherError,
    ValidationError,
)
from .signal_model import ChannelFrame, PathParams, RadarGrid, synthesize_frame
from .spectrum import background_subtract, periodogram
from .cfar import quadratic_offset

__all__ = [
    "MleConfig",
    "EstimatedPath",
    "model_response",
    "atom_matrix",
    "model_jacobian",
    "initial_candidate",
    "solve_weights",
    "gauss_newton_refine",
    "crb_covariance",
    "crb_weight_variance",
    "estimate_noise_variance",
    "estimate",
]

# residual energy below this fraction of the data energy is treated as zero
_EXHAUSTED = 1e-20
_RIDGE = 1e-12
# smallest eigenvalue of the normalised Gram matrix still considered full rank
_RANK_TOL = 1e-10
_DAMPING_MAX = 1e12


@dataclass(frozen=True)
class MleConfig:
    p_max: int = 25
    n_grad_max: int = 50
    step_tol: float = 1e-8
    validity_snr_db: float = 8.0
    damping_init: float = 1e-3
    background_subtraction: bool = True

    def __post_init__(self):
        if int(self.p_max) != self.p_max or self.p_max < 1:
            raise ConfigError(f"p_max must be an integer >= 1, got {self.p_max}")
        if int(self.n_grad_max) != self.n_grad_max or self.n_grad_max < 1:
            raise ConfigError(f"n_grad_max must be an integer >= 1, got {self.n_grad_max}")
        if not (math.isfinite(self.step_tol) and self.step_tol > 0):
            raise ConfigError(f"step_tol must be > 0, got {self.step_tol}")
        if not (math.isfinite(self.damping_init) and self.damping_init >= 0):
            raise ConfigError(f"damping_init must be >= 0, got {self.damping_init}")
        if not math.isfinite(self.validity_snr_db):
            raise ConfigError(f"validity_snr_db must be finite, got {self.validity_snr_db}")


@dataclass(frozen=True)
class EstimatedPath:
    """An estimated path with the CRB variance of its power ``|weight|**2``."""

    params: PathParams
    weight_variance: float
    accepted: bool

    @property
    def weight_snr(self) -> float:
        """``|g|**4 / var(|g|**2)``, the SNR of the path power estimate."""
        power = abs(self.params.weight) ** 2
        return power**2 / self.weight_variance if self.weight_variance > 0 else math.inf

    @property
    def weight_snr_db(self) -> float:
        snr = self.weight_snr
        return 10.0 * math.log10(snr) if snr > 0 else -math.inf


def model_response(paths: Sequence[PathParams], grid: RadarGrid) -> ChannelFrame:
    """Noiseless frame of ``paths``."""
    return synthesize_frame(paths, grid, 0.0)


# ---------------------------------------------------------------- atoms


def _unit_bins(paths, grid):
    u = np.array([p.delay / grid.delay_resolution for p in paths], dtype=float)
    v = np.array([p.doppler / grid.doppler_resolution for p in paths], dtype=float)
    return u, v


def _factors(u, v, grid, remove_static):
    """Separable atom factors and their derivatives with respect to bins.

    Returns ``a, da`` of shape ``(K, P)`` and ``b, db`` of shape ``(L, P)``;
    atom ``p`` is ``outer(a[:, p], b[:, p])``.
    """
    K, L = grid.K, grid.L
    k = np.arange(K)[:, None]
    ell = np.arange(L)[:, None]
    a = np.exp(-2j * np.pi * k * u[None, :] / K)
    da = (-2j * np.pi * k / K) * a
    b = np.exp(2j * np.pi * ell * v[None, :] / L)
    db = (2j * np.pi * ell / L) * b
    if remove_static:
        b = b - b.mean(axis=0, keepdims=True)
        db = db - db.mean(axis=0, keepdims=True)
    return a, da, b, db


def _outer_cols(x, y):
    """Column-wise Kronecker product: ``(K, P), (L, P) -> (K*L, P)``."""
    return (x[:, None, :] * y[None, :, :]).reshape(x.shape[0] * y.shape[0], x.shape[1])


def atom_matrix(taus_alphas, grid: RadarGrid, remove_static: bool = False) -> np.ndarray:
    """Vectorised atoms as columns, rows ordered ``k * L + l``."""
    pairs = np.asarray(taus_alphas, dtype=float).reshape(-1, 2)
    u = pairs[:, 0] / grid.delay_resolution
    v = pairs[:, 1] / grid.doppler_resolution
    a, _, b, _ = _factors(u, v, grid, remove_static)
    return _outer_cols(a, b)


def _jacobian_bins(weights, a, da, b, db):
    """Columns ``d model / d u_p`` and ``d model / d v_p`` interleaved per path."""
    jt = _outer_cols(da, b) * weights
    ja = _outer_cols(a, db) * weights
    jac = np.empty((jt.shape[0], 2 * jt.shape[1]), dtype=complex)
    jac[:, 0::2] = jt
    jac[:, 1::2] = ja
    return jac


def model_jacobian(paths: Sequence[PathParams], grid: RadarGrid, remove_static: bool = False):
    """Derivative of the vectorised noiseless model with respect to ``(tau_1, alpha_1, ...)``.

    Units are per second and per Hz.  Column ``2p`` is ``g_p`` times the atom
    times ``-2j pi k df``; column ``2p+1`` is ``g_p`` times the atom times
    ``+2j pi l dt``.
    """
    u, v = _unit_bins(paths, grid)
    a, da, b, db = _factors(u, v, grid, remove_static)
    weights = np.array([p.weight for p in paths])
    jac = _jacobian_bins(weights, a, da, b, db)
    jac[:, 0::2] /= grid.delay_resolution
    jac[:, 1::2] /= grid.doppler_resolution
    return jac


# ---------------------------------------------------------------- linear weights


def _near_duplicates(gram):
    d = np.sqrt(np.abs(np.diag(gram)))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.abs(gram) / np.outer(d, d)
    n = gram.shape[0]
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n) if not corr[p, q] < 0.999]
    pairs += [(p, p) for p in range(n) if not d[p] > 0]
    return pairs


def _solve_linear(atoms, y):
    gram = atoms.conj().T @ atoms
    d = np.sqrt(np.abs(np.diag(gram)).real)
    if np.any(d == 0):
        raise IllConditionedError("an atom vanishes (zero norm)", _near_duplicates(gram))
    normalised = gram / np.outer(d, d)
    if np.linalg.eigvalsh(normalised)[0] < _RANK_TOL:
        pairs = _near_duplicates(gram)
        raise IllConditionedError(f"atom matrix is rank deficient; near-duplicate paths {pairs}", pairs)
    ridge = _RIDGE * np.trace(gram).real
    return np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), atoms.conj().T @ y)


def solve_weights(taus_alphas, frame: ChannelFrame, remove_static: bool = False) -> np.ndarray:
    """Least-squares complex weights for fixed delays and Dopplers.

    Solves the normal equations with a ridge of ``1e-12`` times the Gram
    trace.  Raises :class:`IllConditionedError` when the atoms are linearly
    dependent; ``pairs`` on the exception lists the offending paths.
    """
    atoms = atom_matrix(taus_alphas, frame.grid, remove_static)
    return _solve_linear(atoms, frame.data.reshape(-1))


# ---------------------------------------------------------------- candidate


def initial_candidate(residual: ChannelFrame, remove_static: bool = False) -> PathParams:
    """Path at the peak of the twice zero-padded residual periodogram.

    The peak is refined by a parabola fit along each axis and the weight is
    the one-atom least-squares fit.
    """
    grid = residual.grid
    if not np.any(residual.data):
        raise NoCandidate("residual is identically zero")
    spec = periodogram(residual, 2, 2)
    power = spec.power
    n_i, n_j = power.shape
    i, j = np.unravel_index(int(np.argmax(power)), power.shape)
    d_i, _ = quadratic_offset(power[(i - 1) % n_i, j], power[i, j], power[(i + 1) % n_i, j])
    d_j, _ = quadratic_offset(power[i, (j - 1) % n_j], power[i, j], power[i, (j + 1) % n_j])
    tau = ((i + d_i) % n_i) * spec.delay_bin_width
    alpha = spec.wrap_doppler((j + d_j) % n_j) * spec.doppler_bin_width
    tau, alpha = _clamp_physical(tau, alpha, grid)
    atom = atom_matrix([(tau, alpha)], grid, remove_static)[:, 0]
    norm2 = float(np.vdot(atom, atom).real)
    if norm2 == 0.0:
        raise NoCandidate("candidate atom vanishes after static-subspace removal")
    weight = np.vdot(atom, residual.data.reshape(-1)) / norm2
    return PathParams(complex(weight), tau, alpha)


def _bounds(grid):
    u_max = np.nextafter(float(grid.K), 0.0)
    v_max = 0.5 * grid.L * (1.0 - 1e-12)
    return u_max, v_max


def _clamp_bins(u, v, grid):
    u_max, v_max = _bounds(grid)
    return np.clip(u, 0.0, u_max), np.clip(v, -v_max, v_max)


def _clamp_physical(tau, alpha, grid):
    u, v = _clamp_bins(
        np.array([tau / grid.delay_resolution]), np.array([alpha / grid.doppler_resolution]), grid
    )
    tau = float(u[0] * grid.delay_resolution)
    alpha = float(v[0] * grid.doppler_resolution)
    # rounding in the unit conversion can land exactly on the open bound
    if not grid.delay_in_range(tau):
        tau = np.nextafter(grid.max_delay, 0.0)
    if not grid.doppler_in_range(alpha):
        alpha = math.copysign(np.nextafter(grid.max_doppler, 0.0), alpha)
    return tau, alpha


# ---------------------------------------------------------------- refinement


class _Fit:
    """Cost, weights and Jacobian of the current iterate of a refinement."""

    def __init__(self, u, v, y, grid, remove_static):
        self.u, self.v = u, v
        self.a, self.da, self.b, self.db = _factors(u, v, grid, remove_static)
        self.atoms = _outer_cols(self.a, self.b)
        self.weights = _solve_linear(self.atoms, y)
        resid = y - self.atoms @ self.weights
        self.residual = resid
        self.cost = float(np.vdot(resid, resid).real)

    def step(self, damping):
        jac = _jacobian_bins(self.weights, self.a, self.da, self.b, self.db)
        # project out the weight directions (variable projection)
        q, _ = np.linalg.qr(self.atoms)
        jac = jac - q @ (q.conj().T @ jac)
        normal = (jac.conj().T @ jac).real
        grad = (jac.conj().T @ self.residual).real
        diag = np.diag(normal).copy()
        diag[diag <= 0] = 1.0
        return np.linalg.solve(normal + damping * np.diag(diag), grad)


def _to_paths(u, v, weights, grid):
    out = []
    for i in range(len(u)):
        tau, alpha = _clamp_physical(u[i] * grid.delay_resolution, v[i] * grid.doppler_resolution, grid)
        out.append(PathParams(complex(weights[i]), tau, alpha))
    return out


def gauss_newton_refine(
    paths: Sequence[PathParams],
    frame: ChannelFrame,
    config: MleConfig = MleConfig(),
    remove_static: bool = False,
) -> list:
    """Jointly refine delays and Dopplers of ``paths`` against ``frame``.

    Levenberg-Marquardt damped Gauss-Newton on the variable-projection cost
    ``||H - B(theta) g(theta)||**2`` where the weights ``g`` are re-solved by
    least squares at every iterate.  The damping is halved after an accepted
    step and multiplied by 10 after a rejected one, so the cost never
    increases.  Iteration stops when the largest accepted parameter change
    is below ``config.step_tol`` bins or after ``config.n_grad_max`` steps.
    """
    if len(paths) == 0:
        raise ValidationError("gauss_newton_refine needs at least one path")
    grid = frame.grid
    for i, p in enumerate(paths):
        p.check_range(grid, i)
    y = frame.data.reshape(-1)
    u, v = _unit_bins(paths, grid)
    fit = _Fit(u, v, y, grid, remove_static)
    if not math.isfinite(fit.cost):
        raise NumericalError("initial cost is not finite", list(paths))
    damping = config.damping_init
    for _ in range(config.n_grad_max):
        try:
            delta = fit.step(damping)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta)):
            raise NumericalError("non-finite Gauss-Newton step", _to_paths(fit.u, fit.v, fit.weights, grid))
        u_new, v_new = _clamp_bins(fit.u + delta[0::2], fit.v + delta[1::2], grid)
        small = max(np.max(np.abs(u_new - fit.u)), np.max(np.abs(v_new - fit.v))) < config.step_tol
        try:
            trial = _Fit(u_new, v_new, y, grid, remove_static)
        except IllConditionedError:
            trial = None
        if trial is not None and not math.isfinite(trial.cost):
            raise NumericalError("cost became non-finite", _to_paths(fit.u, fit.v, fit.weights, grid))
        if trial is not None and trial.cost < fit.cost:
            fit = trial
            damping *= 0.5
        else:
            damping = max(damping, 1e-6) * 10.0
            if damping > _DAMPING_MAX:
                break
        if small:
            break
    return _to_paths(fit.u, fit.v, fit.weights, grid)


# ---------------------------------------------------------------- Cramer-Rao bound


def _fisher_bins(paths, grid, remove_static):
    """Fisher information (unit noise variance) over ``(Re g, Im g, u, v)`` per path."""
    u, v = _unit_bins(paths, grid)
    a, da, b, db = _factors(u, v, grid, remove_static)
    weights = np.array([p.weight for p in paths])
    atoms = _outer_cols(a, b)
    jac = _jacobian_bins(weights, a, da, b, db)
    n = len(paths)
    d = np.empty((atoms.shape[0], 4 * n), dtype=complex)
    d[:, 0::4] = atoms
    d[:, 1::4] = 1j * atoms
    d[:, 2::4] = jac[:, 0::2]
    d[:, 3::4] = jac[:, 1::2]
    return 2.0 * (d.conj().T @ d).real


def crb_covariance(
    paths: Sequence[PathParams], grid: RadarGrid, noise_var: float, remove_static: bool = False
) -> np.ndarray:
    """Inverse Fisher information over ``(Re g, Im g, tau, alpha)`` per path.

    ``noise_var`` is the complex per-sample noise variance.  Delay entries are
    in seconds, Doppler entries in Hz.
    """
    if not (math.isfinite(noise_var) and noise_var > 0):
        raise ValidationError(f"noise_var must be > 0, got {noise_var}")
    if len(paths) == 0:
        return np.zeros((0, 0))
    fim = _fisher_bins(paths, grid, remove_static)
    scale = np.sqrt(np.abs(np.diag(fim)))
    if np.any(scale == 0):
        bad = sorted({int(i) // 4 for i in np.flatnonzero(scale == 0)})
        raise SingularFisherError(f"paths {bad} carry no information", [(p, p) for p in bad])
    normalised = fim / np.outer(scale, scale)
    w, vecs = np.linalg.eigh(normalised)
    if w[0] < _RANK_TOL:
        loading = np.abs(vecs[:, 0]).reshape(len(paths), 4).max(axis=1)
        coupled = [int(i) for i in np.flatnonzero(loading > 0.1)]
        raise SingularFisherError(
            f"Fisher information is singular; coupled paths {coupled}",
            [(p, q) for p in coupled for q in coupled if p < q],
        )
    cov = np.linalg.inv(normalised) / np.outer(scale, scale) * noise_var
    units = np.tile([1.0, 1.0, grid.delay_resolution, grid.doppler_resolution], len(paths))
    return cov * np.outer(units, units)


def crb_weight_variance(
    paths: Sequence[PathParams], grid: RadarGrid, noise_var: float, remove_static: bool = False
) -> np.ndarray:
    """CRB on the variance of each path power ``|g_p|**2``.

    Obtained from the ``(Re g, Im g)`` block of the inverse Fisher
    information through the gradient ``2 (Re g, Im g)``.
    """
    cov = crb_covariance(paths, grid, noise_var, remove_static)
    out = np.empty(len(paths))
    for p, path in enumerate(paths):
        grad = 2.0 * np.array([path.weight.real, path.weight.imag])
        block = cov[4 * p : 4 * p + 2, 4 * p : 4 * p + 2]
        out[p] = float(grad @ block @ grad)
    return out


# ---------------------------------------------------------------- outer loop


def estimate_noise_variance(residual: ChannelFrame, remove_static: bool = False) -> float:
    """Per-sample noise variance from the median residual periodogram bin.

    A bin of white noise with variance ``s2`` is exponential with mean
    ``K L s2``, so ``s2 = median / (ln 2 K L)``.  The zero-Doppler column is
    skipped when the static subspace has been removed.
    """
    power = periodogram(residual).power
    if remove_static:
        power = power[:, 1:]
    grid = residual.grid
    return float(np.median(power) / (math.log(2.0) * grid.K * grid.L))


def _residual(y: ChannelFrame, paths, remove_static):
    model = model_response(paths, y.grid)
    if remove_static:
        model = background_subtract(model)
    return y.with_data(y.data - model.data)


def estimate(frame: ChannelFrame, config: MleConfig = MleConfig()) -> list:
    """Successive detection, joint refinement and CRB validation of paths.

    Returns the estimated paths in the order they were found.  A pure-noise
    frame yields an empty list.
    """
    remove_static = config.background_subtraction
    y = background_subtract(frame) if remove_static else frame
    threshold = 10.0 ** (config.validity_snr_db / 10.0)
    total = y.energy
    paths: list = []
    residual = y
    noise_var = None
    while len(paths) < config.p_max:
        if total == 0.0 or residual.energy <= _EXHAUSTED * total:
            break
        noise_var = max(estimate_noise_variance(residual, remove_static), np.finfo(float).tiny)
        try:
            candidate = initial_candidate(residual, remove_static)
            trial = gauss_newton_refine([*paths, candidate], y, config, remove_static)
            var = crb_weight_variance(trial, y.grid, noise_var, remove_static)
        except (NoCandidate, IllConditionedError, NumericalError):
            break
        power = abs(trial[-1].weight) ** 2
        if not power**2 >= threshold * var[-1]:
            break
        paths = trial
        residual = _residual(y, paths, remove_static)
    if not paths:
        return []
    noise_var = max(estimate_noise_variance(residual, remove_static), np.finfo(float).tiny)
    try:
        var = crb_weight_variance(paths, y.grid, noise_var, remove_static)
    except IllConditionedError:
        var = np.full(len(paths), np.inf)
    out = []
    for p, v in zip(paths, var):
        power = abs(p.weight) ** 2
        out.append(EstimatedPath(p, float(v), bool(power**2 >= threshold * v)))
    return out
