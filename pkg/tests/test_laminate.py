import numpy as np
import pytest
from numpy.testing import assert_allclose

from perielast.fields import LaminateMedium, SmoothMedium
from perielast.laminate import (laminate_bloch_oracle, laminate_chi_profile,
                                laminate_effective_C, laminate_gamma_profile,
                                laminate_second_order, oracle_solve_1d,
                                profile_from_laminate, profile_from_smooth,
                                stack_omega2)
from perielast.solver import PeriodicSolver
from perielast.tensors import LamePair


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_profile_sampling_convention():
    spec = LaminateMedium((0.5, 0.5), (LamePair(0.0, 1.0), LamePair(0.0, 3.0)),
                          (1.0, 2.0))
    prof = profile_from_laminate(spec, 2, samples=8)
    assert_allclose(prof.rho, [1, 1, 1, 1, 2, 2, 2, 2], atol=0)
    assert_allclose(prof.C[:, 0, 1, 0, 1], [1, 1, 1, 1, 3, 3, 3, 3], atol=0)
    assert prof.spacing == 1.0 / 8


def test_profile_from_smooth_guards():
    bad = SmoothMedium(LamePair(2.0, 1.0), mu_terms=((0.1, (1, 1), 0.0),))
    with pytest.raises(ValueError):
        profile_from_smooth(bad, 2)
    bad = SmoothMedium(LamePair(2.0, 1.0),
                       aniso_terms=(((0, 0, 0, 1), 0.1, (1, 0), 0.0),))
    with pytest.raises(ValueError):
        profile_from_smooth(bad, 2)


def test_backus_closed_forms(bank):
    # effective moduli of a layered medium against the classical averages
    fr = np.array([0.25, 0.75])
    lam = np.array([1.0, 2.5])
    mu = np.array([1.0, 0.6])
    M = lam + 2 * mu

    def av(x):
        return float((fr * x).sum())

    expect = {
        (0, 0, 0, 0): 1.0 / av(1.0 / M),
        (0, 0, 1, 1): av(lam / M) / av(1.0 / M),
        (1, 1, 1, 1): av(M) - av(lam ** 2 / M) + av(lam / M) ** 2 / av(1.0 / M),
        (0, 1, 0, 1): 1.0 / av(1.0 / mu),
    }
    prof = profile_from_laminate(bank.spec("laminate_asym"), 2)
    Cb = laminate_effective_C(prof).entries
    for slot, val in expect.items():
        assert Cb[slot] == pytest.approx(val, abs=1e-10)
    # the spectral pipeline lands on the same tensor
    _, _, model = bank.solved("laminate_asym")
    for slot, val in expect.items():
        assert model.Cbar[slot] == pytest.approx(val, abs=1e-9)


def test_two_phase_across_layer_shear():
    spec = LaminateMedium((0.5, 0.5), (LamePair(0.0, 1.0), LamePair(0.0, 3.0)),
                          (1.0, 1.0))
    Cb = laminate_effective_C(profile_from_laminate(spec, 2)).entries
    # harmonic mean 2/(1/1 + 1/3)
    assert Cb[0, 1, 0, 1] == pytest.approx(1.5, abs=1e-10)
    assert Cb[0, 0, 0, 0] == pytest.approx(3.0, abs=1e-10)
    assert Cb[1, 1, 1, 1] == pytest.approx(4.0, abs=1e-10)
    assert abs(Cb[0, 0, 1, 1]) <= 1e-10


def test_smooth_profile_fields_match_spectral(bank):
    med, cset, _ = bank.solved("smooth1d")
    prof = profile_from_smooth(bank.spec("smooth1d"), 2)
    stride = prof.samples // med.grid.n

    chi, _ = laminate_chi_profile(prof)
    assert rel_l2(cset.chi1[..., 0], chi[..., ::stride]) <= 1e-7

    gam, _ = laminate_gamma_profile(prof)
    assert rel_l2(cset.gamma[..., 0], gam[..., ::stride]) <= 1e-7


def test_oracle_solve_matches_spectral(bank):
    med, _, _ = bank.solved("smooth1d")
    grid = med.grid
    prof = profile_from_smooth(bank.spec("smooth1d"), 2)
    f1 = np.stack([np.cos(2 * np.pi * prof.t),
                   np.sin(4 * np.pi * prof.t + 0.3)])
    u1 = oracle_solve_1d(prof, f1)

    y1, _ = grid.coords()
    f = np.stack([np.cos(2 * np.pi * y1), np.sin(4 * np.pi * y1 + 0.3)])
    u, rep = PeriodicSolver(med.C).solve(f)
    assert rep.converged
    stride = prof.samples // grid.n
    assert rel_l2(u[..., 0], u1[:, ::stride]) <= 1e-7

    with pytest.raises(ValueError):
        oracle_solve_1d(prof, f1 + 0.5)


def test_second_order_oracle_two_phase(bank):
    prof = profile_from_laminate(bank.spec("laminate2p"), 2)
    so = laminate_second_order(prof)
    assert so["rho_bar"] == 1.0
    # both polarizations carry the same second-order coefficient here
    assert_allclose(so["E_axial"], -np.eye(2) / 192, atol=1e-10)
    assert np.abs(so["D_axial"]).max() <= 1e-12
    assert so["Cbar"].entries[0, 1, 0, 1] == pytest.approx(1.5, abs=1e-10)


def test_stack_omega2_uniform_layer():
    # one uniform layer: omega = c k exactly
    assert stack_omega2([(1.0, 1.0, 1.0)], 0.7) == pytest.approx(0.49,
                                                                 abs=1e-12)
    assert stack_omega2([(4.0, 1.0, 1.0)], 0.5) == pytest.approx(1.0,
                                                                 abs=1e-12)


def test_transfer_matrix_oracle(bank):
    spec = bank.spec("laminate2p")
    k = 2 * np.pi * 0.1
    out = laminate_bloch_oracle(spec, k)
    assert out.shape == (2,)
    assert_allclose(out[0], 0.59091401, rtol=1e-7)
    # lam = 0 makes the longitudinal stack a rescaled shear stack
    assert_allclose(out[1], 2.0 * out[0], rtol=1e-10)
    out3 = laminate_bloch_oracle(spec, k, dim=3)
    assert out3.shape == (3,) and out3[0] == out3[1]
    with pytest.raises(TypeError):
        laminate_bloch_oracle(bank.spec("smooth1d"), k)


def test_transfer_matrix_fourth_order_coefficient(bank):
    # departure from the quasi-static parabola matches c4 = -1/128
    spec = bank.spec("laminate2p")
    k = 2 * np.pi * 0.1
    w2 = laminate_bloch_oracle(spec, k)[0]
    dev = 1.0 - w2 / (1.5 * k ** 2)
    assert dev == pytest.approx((1.0 / 128.0) * k ** 2 / 1.5, rel=0.05)
