import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaydoppler.exceptions import IllConditionedError, NoCandidate, SingularFisherError, ValidationError, ConfigError
from delaydoppler.mle import (
    EstimatedPath,
    MleConfig,
    atom_matrix,
    crb_covariance,
    crb_weight_variance,
    estimate,
    estimate_noise_variance,
    gauss_newton_refine,
    initial_candidate,
    model_jacobian,
    model_response,
    solve_weights,
)
from delaydoppler.signal_model import ChannelFrame, PathParams, RadarGrid, synthesize_frame
from delaydoppler.spectrum import background_subtract

G = RadarGrid(32, 16, 1e6, 1e-4)
NO_SUB = MleConfig(background_subtraction=False)


def path(u, v, w=1.0, grid=G):
    return PathParams(w, u * grid.delay_resolution, v * grid.doppler_resolution)


def random_paths(rng, n, grid=G, margin=1.0):
    return [
        path(rng.uniform(margin, grid.K - margin), rng.uniform(-grid.L / 2 + margin, grid.L / 2 - margin),
             complex(rng.normal(), rng.normal()), grid)
        for _ in range(n)
    ]


@pytest.mark.parametrize("kwargs", [dict(p_max=0), dict(n_grad_max=0), dict(step_tol=0.0), dict(damping_init=-1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        MleConfig(**kwargs)


def test_model_response_empty_and_exact():
    assert not np.any(model_response([], G).data)
    paths = random_paths(np.random.default_rng(0), 3)
    assert np.array_equal(model_response(paths, G).data, synthesize_frame(paths, G).data)


def test_residual_is_the_noise():
    paths = random_paths(np.random.default_rng(1), 2)
    sigma = 0.3
    f = synthesize_frame(paths, G, sigma, rng_seed=5)
    r = f.data - model_response(paths, G).data
    assert np.sum(np.abs(r) ** 2) == pytest.approx(sigma**2 * G.K * G.L, rel=0.15)


def test_candidate_near_truth():
    rng = np.random.default_rng(2)
    for _ in range(20):
        (p,) = random_paths(rng, 1)
        c = initial_candidate(synthesize_frame([p], G))
        assert abs(c.delay - p.delay) < 0.5 * G.delay_resolution
        dv = (c.doppler - p.doppler + G.max_doppler) % (2 * G.max_doppler) - G.max_doppler
        assert abs(dv) < 0.5 * G.doppler_resolution


def test_candidate_on_zero_residual():
    with pytest.raises(NoCandidate):
        initial_candidate(ChannelFrame(G, np.zeros((G.K, G.L))))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_candidate_power_bounded_by_energy(seed):
    rng = np.random.default_rng(seed)
    f = ChannelFrame(G, rng.normal(size=(G.K, G.L)) + 1j * rng.normal(size=(G.K, G.L)))
    c = initial_candidate(f)
    atom = atom_matrix([(c.delay, c.doppler)], G)[:, 0]
    assert abs(c.weight) ** 2 * np.vdot(atom, atom).real <= f.energy * (1 + 1e-12)


def test_single_atom_weight():
    p = path(7.3, 2.6, 2 + 3j)
    w = solve_weights([(p.delay, p.doppler)], synthesize_frame([p], G))
    assert abs(w[0] - (2 + 3j)) < 1e-10


def test_two_grid_atoms_weights():
    a, b = path(4, 2, 1 - 1j), path(11, -5, 0.5j)
    w = solve_weights([(a.delay, a.doppler), (b.delay, b.doppler)], synthesize_frame([a, b], G))
    assert np.allclose(w, [1 - 1j, 0.5j], atol=1e-10)


def test_duplicate_atoms_ill_conditioned():
    p = path(4.2, 1.1)
    with pytest.raises(IllConditionedError) as err:
        solve_weights([(p.delay, p.doppler)] * 2, synthesize_frame([p], G))
    assert (0, 1) in err.value.pairs


def _fd_jacobian(paths, grid, remove_static, h_rel=1e-9):
    cols = []
    for i, p in enumerate(paths):
        for axis, res in (("delay", grid.delay_resolution), ("doppler", grid.doppler_resolution)):
            h = h_rel * res
            plus = list(paths)
            minus = list(paths)
            plus[i] = PathParams(p.weight, p.delay + (h if axis == "delay" else 0), p.doppler + (h if axis == "doppler" else 0))
            minus[i] = PathParams(p.weight, p.delay - (h if axis == "delay" else 0), p.doppler - (h if axis == "doppler" else 0))
            fp = model_response(plus, grid)
            fm = model_response(minus, grid)
            if remove_static:
                fp, fm = background_subtract(fp), background_subtract(fm)
            cols.append((fp.data - fm.data).reshape(-1) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("remove_static", [False, True])
def test_jacobian_finite_differences(remove_static):
    rng = np.random.default_rng(3)
    for _ in range(10):
        paths = random_paths(rng, 2)
        jac = model_jacobian(paths, G, remove_static)
        fd = _fd_jacobian(paths, G, remove_static)
        assert np.linalg.norm(jac - fd) <= 1e-5 * np.linalg.norm(fd)


def test_refine_from_perturbed_start():
    rng = np.random.default_rng(4)
    for _ in range(10):
        (p,) = random_paths(rng, 1, margin=2.0)
        f = synthesize_frame([p], G)
        start = PathParams(p.weight, p.delay + 0.3 * G.delay_resolution, p.doppler + 0.3 * G.doppler_resolution)
        (q,) = gauss_newton_refine([start], f, NO_SUB)
        assert abs(q.delay - p.delay) < 1e-6 * G.delay_resolution
        assert abs(q.doppler - p.doppler) < 1e-6 * G.doppler_resolution
        assert abs(q.weight - p.weight) < 1e-6 * abs(p.weight)


def test_refine_at_truth_is_fixed_point():
    p = path(9.37, -3.21, 1.5 - 0.5j)
    (q,) = gauss_newton_refine([p], synthesize_frame([p], G), NO_SUB)
    assert abs(q.delay - p.delay) <= 1e-12 * G.delay_resolution * G.K
    assert abs(q.doppler - p.doppler) <= 1e-12 * G.doppler_resolution * G.L


def test_refine_needs_paths():
    with pytest.raises(ValidationError):
        gauss_newton_refine([], synthesize_frame([], G), NO_SUB)


def _numeric_fim(paths, grid, noise_var):
    # finite-difference derivatives of the model over (Re g, Im g, tau, alpha)
    cols = []
    fd = _fd_jacobian(paths, grid, False, 1e-7)
    for i, p in enumerate(paths):
        unit = [PathParams(1.0 if j == i else 0.0, q.delay, q.doppler) for j, q in enumerate(paths)]
        atom = model_response(unit, grid).data.reshape(-1)
        cols += [atom, 1j * atom, fd[:, 2 * i], fd[:, 2 * i + 1]]
    d = np.column_stack(cols)
    return 2.0 / noise_var * (d.conj().T @ d).real


def test_crb_matches_numeric_inverse():
    paths = [path(5.3, 2.2, 0.8 + 0.3j), path(17.6, -4.1, -0.5j)]
    cov = crb_covariance(paths, G, 0.2)
    ref = np.linalg.inv(_numeric_fim(paths, G, 0.2))
    assert np.allclose(cov, ref, rtol=1e-4, atol=0)


def test_single_path_radial_weight_variance():
    sigma2 = 0.5
    for phase in (0.0, 0.7, 2.0):
        p = path(10.4, 3.3, np.exp(1j * phase))
        cov = crb_covariance([p], G, sigma2)[:2, :2]
        radial = np.array([math.cos(phase), math.sin(phase)])
        assert radial @ cov @ radial == pytest.approx(sigma2 / (2 * G.K * G.L), rel=1e-9)
        # var(|g|^2) through the gradient 2|g| along the radial direction
        (v,) = crb_weight_variance([p], G, sigma2)
        assert v == pytest.approx(4 * sigma2 / (2 * G.K * G.L), rel=1e-9)


def test_crb_linear_in_noise():
    paths = [path(5.3, 2.2), path(17.6, -4.1, 0.3j)]
    a = crb_weight_variance(paths, G, 0.1)
    b = crb_weight_variance(paths, G, 0.7)
    assert np.allclose(b, 7 * a, rtol=1e-12)


def test_crb_separated_paths_decouple():
    a, b = path(5.3, 2.2), path(20.6, -5.4, 0.6j)
    both = crb_weight_variance([a, b], G, 0.3)
    single = [crb_weight_variance([a], G, 0.3)[0], crb_weight_variance([b], G, 0.3)[0]]
    assert np.allclose(both, single, rtol=0.01)


def test_crb_singular_for_duplicates():
    p = path(5.3, 2.2)
    with pytest.raises(SingularFisherError):
        crb_covariance([p, p], G, 0.1)


def test_noise_variance_estimate():
    f = synthesize_frame([], RadarGrid(128, 64, 1e6, 1e-4), 0.5, rng_seed=3)
    assert estimate_noise_variance(f) == pytest.approx(0.25, rel=0.05)


@pytest.mark.parametrize("remove_static", [False, True])
def test_estimate_noiseless_two_paths(remove_static):
    rng = np.random.default_rng(6)
    cfg = MleConfig(background_subtraction=remove_static)
    for _ in range(5):
        while True:
            a, b = random_paths(rng, 2, margin=2.0)
            if abs(a.delay - b.delay) >= 2 * G.delay_resolution and abs(a.doppler - b.doppler) >= 2 * G.doppler_resolution:
                break
        found = estimate(synthesize_frame([a, b], G), cfg)
        assert len(found) == 2 and all(e.accepted for e in found)
        for truth in (a, b):
            best = min(found, key=lambda e: abs(e.params.delay - truth.delay))
            assert abs(best.params.delay - truth.delay) < 1e-6 * G.delay_resolution
            assert abs(best.params.doppler - truth.doppler) < 1e-6 * G.doppler_resolution


def test_estimate_cap_picks_stronger():
    a, b = path(6.2, 3.1, 2.0), path(19.4, -4.3, 0.7j)
    (e,) = estimate(synthesize_frame([a, b], G), MleConfig(p_max=1, background_subtraction=False))
    assert e.accepted
    assert abs(e.params.delay - a.delay) < 0.05 * G.delay_resolution


def test_estimate_pure_noise_is_empty():
    cfg = MleConfig(validity_snr_db=10.0, background_subtraction=False)
    empty = sum(not any(e.accepted for e in estimate(synthesize_frame([], G, 1.0, rng_seed=s), cfg)) for s in range(100))
    assert empty >= 95


def test_estimate_zero_frame():
    assert estimate(ChannelFrame(G, np.zeros((G.K, G.L)))) == []


def test_accepted_paths_meet_validity():
    rng = np.random.default_rng(8)
    paths = random_paths(rng, 3, margin=2.0)
    for e in estimate(synthesize_frame(paths, G, 0.3, rng_seed=1), NO_SUB):
        assert isinstance(e, EstimatedPath)
        if e.accepted:
            assert abs(e.params.weight) ** 4 / e.weight_variance >= 10 ** (NO_SUB.validity_snr_db / 10)
            assert e.weight_snr_db >= NO_SUB.validity_snr_db


def test_static_removal_ignores_static_paths():
    los = path(0.0, 0.0, 100.0)
    mover = path(9.4, 3.6, 1.0)
    found = estimate(synthesize_frame([los, mover], G), MleConfig())
    accepted = [e for e in found if e.accepted]
    assert len(accepted) == 1
    assert abs(accepted[0].params.delay - mover.delay) < 1e-6 * G.delay_resolution
