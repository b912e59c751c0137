import numpy as np
import pytest

from thinperm.cells import EffectiveLaw, RegimeDescriptor, assemble_effective_law
from thinperm.darcy import (
    MacroData,
    reconstruct_two_scale,
    sigma_mesh,
    solve_darcy,
    verify_two_pressure_residual,
)
from thinperm.errors import DegenerateTensor, RegimeMismatch


def constant_law(k=0.7, beta1=0.0, regime=None):
    if regime is None:
        regime = RegimeDescriptor(alpha=0.0, gamma_class=None, sn_class="empty")
    return EffectiveLaw(
        k_energy=np.array([[k / 2, 0.0], [0.0, 0.0]]),
        k_avg=np.array([[k, 0.0], [0.0, 0.0]]),
        beta=np.array([beta1, 0.0]),
        kappa=None,
        laplace_gram=np.array([[1.0]]),
        regime=regime,
        identity_gap=0.0,
        h=1 / 16,
    )


def test_linear_dirichlet_data_exact():
    law = constant_law(k=0.7)
    data = MacroData(mu=2.0, f0=(0.0, 0.0), p_b=lambda x: np.asarray(x, dtype=float))
    sol = solve_darcy(law, data, sigma_mesh(1.0, 40))
    assert np.abs(sol.p0 - sol.nodes).max() < 1e-12
    assert np.abs(sol.u_bar[:, 0] + 0.7 / 2.0).max() < 1e-12
    assert np.abs(sol.u_bar[:, 1]).max() < 1e-14


def test_constant_force_zero_pressure():
    law = constant_law(k=0.7)
    data = MacroData(mu=1.0, f0=(1.0, 0.0), p_b=0.0)
    sol = solve_darcy(law, data, sigma_mesh(1.0, 32))
    assert np.abs(sol.p0).max() < 1e-12
    assert np.abs(sol.u_bar[:, 0] - 0.7).max() < 1e-12


def test_flux_conservation_constant_coefficients():
    law = constant_law(k=1.3, beta1=0.4)
    data = MacroData(
        mu=1.0, f0=(0.5, 0.0), g_sigma=lambda x: np.full_like(np.asarray(x, float), 2.0),
        p_b=lambda x: 1.0 - 0.3 * np.asarray(x, dtype=float),
    )
    sol = solve_darcy(law, data, sigma_mesh(1.0, 50))
    flux = sol.u_bar[:, 0]
    assert np.abs(flux - flux[0]).max() < 1e-10


def test_maximum_principle():
    law = constant_law(k=0.9)
    data = MacroData(mu=1.0, p_b=lambda x: np.where(np.asarray(x) < 0.5, 0.2, 1.4))
    sol = solve_darcy(law, data, sigma_mesh(1.0, 64))
    assert sol.p0.min() >= 0.2 - 1e-12
    assert sol.p0.max() <= 1.4 + 1e-12


def test_degenerate_tensor_rejected():
    law = constant_law(k=0.0)
    with pytest.raises(DegenerateTensor):
        solve_darcy(law, MacroData(mu=1.0, p_b=0.0), sigma_mesh(1.0, 8))


def test_poiseuille_flux_from_cell_law(slabs_noslip_suite_16):
    law = assemble_effective_law(slabs_noslip_suite_16)
    data = MacroData(mu=1.0, f0=(0.0, 0.0), p_b=lambda x: np.asarray(x, dtype=float))
    sol = solve_darcy(law, data, sigma_mesh(1.0, 64))
    assert abs(abs(sol.u_bar[0, 0]) - 0.28125) < 0.01 * 0.28125


def test_reconstruction_homogeneity(slabs_noslip_suite_16):
    law = assemble_effective_law(slabs_noslip_suite_16)
    d1 = MacroData(mu=1.0, f0=(1.0, 0.0), p_b=0.0)
    d2 = MacroData(mu=1.0, f0=(2.0, 0.0), p_b=0.0)
    r1 = reconstruct_two_scale(solve_darcy(law, d1, sigma_mesh(1.0, 16)), slabs_noslip_suite_16)
    r2 = reconstruct_two_scale(solve_darcy(law, d2, sigma_mesh(1.0, 16)), slabs_noslip_suite_16)
    u1 = r1.u0_nodal(0.3)
    u2 = r2.u0_nodal(0.3)
    assert np.abs(u2 - 2.0 * u1).max() < 1e-12 * max(np.abs(u1).max(), 1.0)


def test_reconstruction_vanishes_when_force_balances_gradient(slabs_noslip_suite_16):
    law = assemble_effective_law(slabs_noslip_suite_16)
    # f = grad p_b pointwise: representation coefficients vanish
    data = MacroData(mu=1.0, f0=(0.7, 0.0), p_b=lambda x: 0.7 * np.asarray(x, dtype=float))
    sol = solve_darcy(law, data, sigma_mesh(1.0, 32))
    recon = reconstruct_two_scale(sol, slabs_noslip_suite_16)
    assert np.abs(recon.u0_nodal(0.4)).max() < 1e-12


def test_reconstruction_vertical_average_vanishes_sealed(capped_slip_suite):
    law = assemble_effective_law(capped_slip_suite)
    data = MacroData(mu=1.0, f0=(1.0, 0.3), g_sigma=0.5, p_b=0.0)
    sol = solve_darcy(law, data, sigma_mesh(1.0, 32))
    recon = reconstruct_two_scale(sol, capped_slip_suite)
    for x in (0.1, 0.5, 0.9):
        ub = recon.u_bar_check(x)
        assert abs(ub[1]) < 1e-8 * max(abs(ub[0]), 1e-8)


def test_reconstruction_matches_darcy_velocity(capped_slip_suite):
    law = assemble_effective_law(capped_slip_suite)
    data = MacroData(mu=2.0, f0=(1.0, 0.0), g_sigma=0.25, p_b=0.0)
    sol = solve_darcy(law, data, sigma_mesh(1.0, 32))
    recon = reconstruct_two_scale(sol, capped_slip_suite)
    x = 0.37
    ub = recon.u_bar_check(x)
    want = sol.u_bar_at(x)[0]
    assert np.abs(ub - want).max() < 1e-10 * max(np.abs(want).max(), 1e-10)


def test_reconstruction_regime_mismatch(capped_slip_suite, slabs_noslip_suite_16):
    law = assemble_effective_law(capped_slip_suite)
    sol = solve_darcy(law, MacroData(mu=1.0, f0=(1.0, 0.0), p_b=0.0), sigma_mesh(1.0, 8))
    with pytest.raises(RegimeMismatch):
        reconstruct_two_scale(sol, slabs_noslip_suite_16)


def test_two_pressure_residual_vanishes(capped_slip_suite):
    law = assemble_effective_law(capped_slip_suite)
    data = MacroData(mu=1.0, f0=(1.0, 0.2), g_sigma=0.5, p_b=lambda x: 0.3 * np.asarray(x, float))
    sol = solve_darcy(law, data, sigma_mesh(1.0, 32))
    fields = [
        (lambda x: np.ones_like(np.asarray(x, float)), capped_slip_suite.w[0].u),
        (lambda x: np.asarray(x, float) ** 2, capped_slip_suite.w_gamma.u),
        (lambda x: np.sin(np.pi * np.asarray(x, float)), capped_slip_suite.laplace[0].u),
    ]
    reports = verify_two_pressure_residual(sol, capped_slip_suite, fields)
    for rep in reports:
        assert rep["relative"] < 1e-8


def test_two_pressure_residual_zero_field(capped_slip_suite):
    law = assemble_effective_law(capped_slip_suite)
    sol = solve_darcy(law, MacroData(mu=1.0, f0=(1.0, 0.0), p_b=0.0), sigma_mesh(1.0, 16))
    zero = np.zeros(2 * capped_slip_suite.disc.n2)
    rep = verify_two_pressure_residual(sol, capped_slip_suite, [(lambda x: np.ones_like(x), zero)])
    assert rep[0]["total"] == 0.0


def test_solenoidal_test_fields_annihilate_p1(capped_slip_suite):
    # discretely divergence-free cell fields make the p1 term vanish
    law = assemble_effective_law(capped_slip_suite)
    data = MacroData(mu=1.0, f0=(1.0, 0.0), g_sigma=1.0, p_b=0.0)
    sol = solve_darcy(law, data, sigma_mesh(1.0, 16))
    fields = [
        (lambda x: np.cos(np.pi * np.asarray(x, float)), capped_slip_suite.w[0].u),
        (lambda x: np.ones_like(np.asarray(x, float)), capped_slip_suite.w_gamma.u),
    ]
    reports = verify_two_pressure_residual(sol, capped_slip_suite, fields)
    for rep in reports:
        assert abs(rep["p1_term"]) < 1e-9 * max(abs(rep["viscous"]), 1e-12)
