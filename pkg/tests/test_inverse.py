"""Main-equation assembly, solve, series evaluation, and recovery formulas."""

from math import pi

import numpy as np
import pytest

from qpencil import (
    DegenerateSeriesError,
    NumericBackground,
    PotentialPair,
    SingularSystemError,
    ZeroBackground,
    assemble_system,
    compute_epsilons,
    find_eigenvalues,
    make_split_data,
    model_spectral_data,
    recover_q0_antiderivative,
    recover_q1,
    recover_theta,
    run_reconstruction,
    solve_main,
    weyl_residues,
)
from qpencil.inverse import EpsilonFields, active_layout, default_grid, solve_residual


@pytest.fixture(scope="module")
def zero_model():
    return ZeroBackground()


def test_identity_data_recovers_model_solution(zero_model):
    # with a forced window the solve is non-trivial but must return the
    # background solution values at every active index
    data = model_spectral_data(2)
    x = default_grid(60)
    system = assemble_system(data, zero_model, x, min_window=2)
    v, v_x = solve_main(system)
    for ridx, (e, i) in enumerate(system.layout.rows()):
        expected = zero_model.s_chain(x, e.lam, e.nu)[e.nu]
        assert np.max(np.abs(v[ridx] - expected)) < 1e-12
        expected_x = zero_model.sx_chain(x, e.lam, e.nu)[e.nu]
        assert np.max(np.abs(v_x[ridx] - expected_x)) < 1e-11


def test_solver_residual_small(zero_model):
    data = make_split_data(0.01)
    system = assemble_system(data, zero_model, default_grid(200))
    v, _ = solve_main(system)
    assert solve_residual(system, v) < 1e-12


def test_active_layout_is_four_by_four_for_split_data(zero_model):
    data = make_split_data(0.02)
    layout = active_layout(data, zero_model)
    assert layout.indices == (-1, 1)
    assert layout.dim == 4
    data0 = make_split_data(0.0)
    layout0 = active_layout(data0, zero_model)
    assert layout0.dim == 4
    assert [e.m for e in layout0.side0] == [2, 2]
    assert [e.m for e in layout0.side1] == [1, 1]


def test_submatrix_invertible_at_right_end(zero_model):
    # the model-row/data-column block at x = pi must be invertible
    data = make_split_data(0.01)
    x = np.array([pi])
    system = assemble_system(data, zero_model, x)
    P = system.P[0]
    dim_half = system.layout.dim // 2
    block = P[dim_half:, :dim_half]
    assert abs(np.linalg.det(block)) > 1e-6


def test_vx_matches_finite_difference_at_second_order(zero_model):
    data = make_split_data(0.01)

    def fd_error(n_grid):
        x = default_grid(n_grid)
        system = assemble_system(data, zero_model, x)
        v, v_x = solve_main(system)
        fd = (v[:, 2:] - v[:, :-2]) / (2 * (x[1] - x[0]))
        return np.max(np.abs(v_x[:, 1:-1] - fd))

    e_coarse = fd_error(100)
    e_fine = fd_error(200)
    assert e_fine < e_coarse
    assert 2.5 < e_coarse / e_fine < 6.0    # ~4 for O(h^2)


def test_epsilons_vanish_for_identity(zero_model):
    data = model_spectral_data(2)
    system = assemble_system(data, zero_model, default_grid(50), min_window=2)
    v, v_x = solve_main(system)
    eps = compute_epsilons(system, v, v_x)
    for arr in (eps.eps1, eps.eps1_prime, eps.eps2, eps.eps3, eps.eps4):
        assert np.max(np.abs(arr)) < 1e-12


def test_epsilons_structure_for_split_data(zero_model):
    x = default_grid(80)
    sys_pos = assemble_system(make_split_data(0.01), zero_model, x)
    eps_pos = compute_epsilons(sys_pos, *solve_main(sys_pos))
    assert abs(eps_pos.eps1[0]) < 1e-14            # every term carries S(0, .) = 0
    assert np.max(np.abs(eps_pos.eps4)) == 0.0     # all simple for delta > 0

    sys_dbl = assemble_system(make_split_data(0.0), zero_model, x)
    eps_dbl = compute_epsilons(sys_dbl, *solve_main(sys_dbl))
    assert np.max(np.abs(eps_dbl.eps4)) > 1e-3     # multiplicity term switches on


def test_recover_theta_identities(zero_model):
    data = make_split_data(0.01)
    system = assemble_system(data, zero_model, default_grid(200))
    eps = compute_epsilons(system, *solve_main(system))
    theta, lam = recover_theta(eps)
    assert theta[0] == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(theta**2 * (1 + eps.eps1**2) - 1.0)) < 1e-12
    assert np.max(np.abs(theta**2 + lam**2 - 1.0)) < 1e-12


def test_recover_theta_trivial_and_degenerate():
    x = default_grid(10)
    zero = np.zeros(x.size, dtype=complex)
    eps = EpsilonFields(x=x, eps1=zero, eps1_prime=zero, eps2=zero,
                        eps3=zero, eps4=zero)
    theta, lam = recover_theta(eps)
    assert np.all(theta == 1.0)
    assert np.all(lam == 0.0)

    bad = EpsilonFields(x=x, eps1=np.full(x.size, 1j), eps1_prime=zero,
                        eps2=zero, eps3=zero, eps4=zero)
    with pytest.raises(DegenerateSeriesError):
        recover_theta(bad)


def test_recovery_zero_for_zero_series(zero_model):
    x = default_grid(20)
    zero = np.zeros(x.size, dtype=complex)
    eps = EpsilonFields(x=x, eps1=zero, eps1_prime=zero, eps2=zero,
                        eps3=zero, eps4=zero)
    recover_theta(eps)
    q1 = recover_q1(eps, zero_model)
    q0ad = recover_q0_antiderivative(eps, q1, zero_model)
    assert np.max(np.abs(q1)) == 0.0
    assert np.max(np.abs(q0ad)) == 0.0


def test_full_pipeline_identity(zero_model):
    rec = run_reconstruction(model_spectral_data(3), zero_model,
                             default_grid(100), min_window=2)
    assert np.max(np.abs(rec.q1)) < 1e-10
    assert np.max(np.abs(rec.q0_antideriv)) < 1e-10
    assert rec.q0_antideriv[0] == 0.0


def test_pipeline_rejects_mismatched_mean_shift(zero_model):
    data = model_spectral_data(3)
    shifted = [(n, data.entry(n).lam + 0.4, data.entry(n).M)
               for n in data.window_indices()]
    from qpencil import normalize_ordering

    bad = normalize_ordering(shifted, tail=ZeroBackground())
    with pytest.raises(Exception):
        run_reconstruction(bad, zero_model)


def test_condition_guard_raises(zero_model):
    data = make_split_data(0.01)
    system = assemble_system(data, zero_model, default_grid(30))
    with pytest.raises(SingularSystemError) as exc:
        solve_main(system, cond_limit=1.0)
    assert exc.value.cond is not None


def test_pipeline_reports_condition_and_residual(zero_model):
    rec = run_reconstruction(make_split_data(0.05), zero_model, default_grid(100))
    assert rec.cond is not None and np.all(np.isfinite(rec.cond))
    assert rec.residual < 1e-11
    assert rec.eps.theta is not None


def test_scaled_operator_norm_tracks_perturbation_size(zero_model):
    from qpencil.inverse import scaled_operator_norm

    x = np.linspace(0, pi, 9)
    base = model_spectral_data(3)
    assert scaled_operator_norm(base, zero_model, x, 3) < 1e-12
    big = scaled_operator_norm(base.replace_entry(2, lam=2.1), zero_model, x, 3)
    small = scaled_operator_norm(base.replace_entry(2, lam=2.01), zero_model, x, 3)
    assert np.isfinite(big) and np.isfinite(small)
    assert small < big
    assert 5.0 < big / small < 20.0    # roughly linear in the eigenvalue shift


def test_layout_rejects_oversized_groups(zero_model):
    from qpencil import OrderTooHighError, normalize_ordering

    raw = [(n, 0.4, 1.0) for n in (-3, -2, -1, 1, 2, 3)]   # one group of six
    data = normalize_ordering(raw, tail=ZeroBackground(), omega0=0.0)
    with pytest.raises(OrderTooHighError):
        active_layout(data, zero_model)


def test_numeric_background_reconstruction_roundtrip():
    """Perturb one eigenvalue of a nonzero background and reconstruct against it."""
    base = PotentialPair.from_functions(
        lambda t: 0.12 * np.sin(2 * t) + 0.05j * np.cos(t),
        lambda t: 0.08 * (1 - np.cos(t)),
        n_grid=200)
    bg = NumericBackground(base, refine=10)
    data = bg.spectral_data(3)
    shift = 0.04
    perturbed = data.replace_entry(2, lam=data.entry(2).lam + shift)
    rec = run_reconstruction(perturbed, bg, default_grid(200))
    assert np.max(np.abs(rec.q1 - bg.q1_values(rec.x))) > 1e-3  # actually moved
    pot = rec.as_potentials()
    eigs = find_eigenvalues(pot, 3, pot.omega0())
    full = weyl_residues(pot, eigs)
    for n in (-2, -1, 1, 2, 3):
        want = perturbed.entry(n).lam
        assert abs(full.entry(n).lam - want) < 2e-3
    assert abs(full.entry(2).M - perturbed.entry(2).M) / abs(perturbed.entry(2).M) < 2e-2
