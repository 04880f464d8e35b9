import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import spherical_jn, spherical_yn

from perielast.dtn import (DtnCoefficients, ResonantDenominator,
                           dtn_coefficients, dtn_table, reciprocity_defect,
                           spherical_hankel)
from perielast.tensors import LamePair

LAME = LamePair(2.0, 1.0)


def hankel_reference(n, z):
    h = spherical_jn(n, z) + 1j * spherical_yn(n, z)
    hp = spherical_jn(n, z, derivative=True) \
        + 1j * spherical_yn(n, z, derivative=True)
    return h, hp


def test_h0_h1_closed_forms():
    for z in (0.7, 2.3, 9.1):
        h, hp = spherical_hankel(0, z)
        assert abs(h - (-1j * np.exp(1j * z) / z)) <= 1e-12
        assert abs(hp - np.exp(1j * z) * (z + 1j) / z ** 2) <= 1e-12
        h, hp = spherical_hankel(1, z)
        assert abs(h - (-(1.0 / z + 1j / z ** 2) * np.exp(1j * z))) <= 1e-12
        h0, _ = spherical_hankel(0, z)
        assert abs(hp - (h0 - 2.0 * h / z)) <= 1e-12


@pytest.mark.parametrize("n", [0, 1, 2, 3, 5, 8, 15])
def test_hankel_against_scipy(n):
    for z in (1.3, 4.7, 8.0):
        h, hp = spherical_hankel(n, z)
        ref_h, ref_hp = hankel_reference(n, z)
        assert abs(h - ref_h) <= 1e-10 * abs(ref_h)
        assert abs(hp - ref_hp) <= 1e-10 * abs(ref_hp)


@pytest.mark.parametrize("n", [0, 1, 2, 4, 7])
def test_hankel_wronskian(n):
    # Im(conj(h) h') = j y' - j' y = 1 / z^2 for real z
    for z in (0.9, 3.7, 11.0):
        h, hp = spherical_hankel(n, z)
        assert (np.conj(h) * hp).imag == pytest.approx(1.0 / z ** 2,
                                                       rel=1e-11)


def test_hankel_finite_difference():
    z, n, step = 2.3, 3, 1e-6
    _, hp = spherical_hankel(n, z)
    hplus, _ = spherical_hankel(n, z + step)
    hminus, _ = spherical_hankel(n, z - step)
    fd = (hplus - hminus) / (2 * step)
    assert abs(fd - hp) <= 1e-6 * abs(hp)


def test_hankel_array_input():
    z = np.array([1.0, 2.0, 4.0])
    h, hp = spherical_hankel(2, z)
    assert h.shape == (3,)
    for i, zi in enumerate(z):
        hs, hps = spherical_hankel(2, float(zi))
        assert h[i] == hs and hp[i] == hps
    assert isinstance(spherical_hankel(2, 1.0)[0], complex)


def test_hankel_guards():
    with pytest.raises(ValueError):
        spherical_hankel(-1, 1.0)
    with pytest.raises(ValueError):
        spherical_hankel(2, 0.0)
    with pytest.warns(RuntimeWarning):
        spherical_hankel(40, 2.0)


def test_coefficient_fields():
    co = dtn_coefficients(3, 1.5, 2.0, LAME)
    assert co.lambda_n == 12.0
    assert co.omega_s == pytest.approx(2.0 / np.sqrt(1.0))
    assert co.omega_p == pytest.approx(2.0 / np.sqrt(4.0))
    # toroidal coefficient recomposes from the logarithmic derivative
    assert co.a_n == pytest.approx(1.0 * (co.gamma_s - 1.0 / 1.5), rel=1e-12)
    hs, hps = spherical_hankel(3, co.omega_s * 1.5)
    assert co.gamma_s == pytest.approx(co.omega_s * hps / hs, rel=1e-12)


def test_block_symmetric_by_construction():
    for n in range(6):
        M = dtn_coefficients(n, 1.5, 2.0, LAME).block()
        assert M.shape == (3, 3)
        assert np.abs(M - M.T).max() == 0.0
        assert M[0, 1] == 0.0 and M[0, 2] == 0.0


def test_reciprocity_zero_and_perturbed():
    rng = np.random.default_rng(11)
    for _ in range(20):
        orders = rng.integers(0, 12, size=4)
        R = float(rng.uniform(0.5, 3.0))
        omega = float(rng.uniform(0.5, 4.0))
        blocks = dtn_table(orders, R, omega, LAME)
        al = rng.standard_normal((4, 3))
        be = rng.standard_normal((4, 3))
        assert reciprocity_defect(blocks, al, be) <= 1e-10

    # a lone off-diagonal defect shows up linearly with known overlap
    M = dtn_table([2], 1.5, 2.0, LAME)[0].block()
    delta = 1e-3
    M[1, 2] += delta
    al = np.array([[0.3, -1.1, 0.7]])
    be = np.array([[0.9, 0.4, -0.2]])
    expect = abs(delta * (al[0, 2] * be[0, 1] - al[0, 1] * be[0, 2]))
    assert reciprocity_defect([M], al, be) == pytest.approx(expect, rel=1e-12)


def test_resonant_denominator_rejected():
    with pytest.raises(ResonantDenominator):
        dtn_coefficients(2, 1.5, 2.0, LAME, floor=1e300)
    with pytest.raises(ValueError):
        dtn_coefficients(2, -1.0, 2.0, LAME)
    with pytest.raises(ValueError):
        dtn_coefficients(2, 1.5, 0.0, LAME)


def test_dtn_table():
    table = dtn_table(range(5), 1.5, 2.0, (2.0, 1.0))
    assert len(table) == 5
    assert [co.n for co in table] == list(range(5))
    assert all(isinstance(co, DtnCoefficients) for co in table)
