import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from perielast.correctors import (CorrectorSet, assemble_b, chi4_rhs_reindexed,
                                  estimate_bytes, solve_all, solve_chi1)
from perielast.fields import CellGrid, SmoothMedium, build_medium, div_values
from perielast.solver import apply_operator_values, rms_norm
from perielast.tensors import LamePair


def small_medium(n=16):
    grid = CellGrid(2, n)
    spec = SmoothMedium(LamePair(2.0, 1.0), rho0=1.0,
                        lam_terms=((0.4, (1, 0), 0.3),),
                        mu_terms=((0.3, (0, 1), 1.1),),
                        rho_terms=((0.25, (1, 1), 0.7),))
    return build_medium(spec, grid)


def test_constant_medium_correctors_vanish(bank):
    med, cset, _ = bank.solved("constant")
    for name in ("chi1", "gamma", "chi4", "d5", "hat_chi5", "hat_gamma4",
                 "hat_gamma3", "disp_chi5", "disp_gamma3"):
        assert not cset.arrays[name].any(), name
    # b degenerates to -C exactly
    assert_allclose(cset.b, -med.C.values, atol=0.0)
    for fam, reps in cset.reports.items():
        for rep in reps.values():
            assert rep.converged and rep.iterations == 0


def test_chi1_residual_reverified(bank):
    med, cset, _ = bank.solved("checker")
    grid = med.grid
    rhs = div_values(med.C.values, grid)
    rhs = rhs - rhs.mean(axis=(-2, -1), keepdims=True)
    worst = 0.0
    for m in range(2):
        for n in range(2):
            r = apply_operator_values(med.C.values, cset.chi1[:, m, n], grid) \
                - rhs[:, m, n]
            worst = max(worst, rms_norm(r) / rms_norm(rhs[:, m, n]))
    assert worst <= 2e-10


def test_correctors_have_zero_mean(bank):
    _, cset, _ = bank.solved("aniso")
    for name, arr in cset.arrays.items():
        if name in ("b", "d5"):
            continue
        mean = np.abs(arr.mean(axis=(-2, -1))).max()
        assert mean <= 1e-13 * max(1.0, np.abs(arr).max()), name


def test_b_matches_reindexed_rhs(bank):
    med, cset, _ = bank.solved("random_trig")
    bc = cset.b - cset.b.mean(axis=(-2, -1), keepdims=True)
    alt = chi4_rhs_reindexed(med.C, cset.field("chi1"))
    # same field through two different assembly orders
    scale = np.abs(bc).max()
    assert np.abs(bc - alt.values).max() <= 1e-11 * scale


def test_laminate_correctors_are_one_dimensional(bank):
    _, cset, _ = bank.solved("laminate_asym")
    for name in ("chi1", "gamma", "chi4"):
        arr = cset.arrays[name]
        span = np.abs(arr - arr[..., :1]).max()
        assert span <= 1e-11 * max(1.0, np.abs(arr).max()), name


def test_uniform_density_kills_gamma(bank):
    _, cset, _ = bank.solved("laminate2p")
    assert not cset.gamma.any()
    for rep in cset.reports["gamma"].values():
        assert rep.iterations == 0 and rep.converged


def test_threads_do_not_change_results():
    med = small_medium()
    one, _ = solve_chi1(med.C, threads=1)
    two, _ = solve_chi1(med.C, threads=2)
    assert_allclose(two.values, one.values, atol=0.0)


def test_solve_all_family_selection():
    med = small_medium()
    cset = solve_all(med, hat=False, dispersive=False)
    assert set(cset.arrays) == {"chi1", "gamma", "b", "chi4", "d5"}
    assert cset.medium_hash == med.digest()


def test_corrector_set_accessors():
    med = small_medium()
    cset = solve_all(med, hat=False, dispersive=False)
    assert cset.field("chi1").rank == 3
    assert cset.field("d5").rank == 5
    assert cset.chi1 is cset.arrays["chi1"]
    with pytest.raises(AttributeError):
        cset.nonsense
    assert cset.max_residual("b") is None
    assert cset.max_residual("chi1") <= 2e-10


def test_save_load_round_trip(tmp_path):
    med = small_medium()
    cset = solve_all(med, hat=False, dispersive=False)
    outdir = tmp_path / "correctors"
    cset.save(outdir)
    with open(outdir / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["dim"] == 2 and manifest["n"] == 16
    assert manifest["medium_hash"] == med.digest()
    assert "max_residual" in manifest["families"]["chi1"]
    back = CorrectorSet.load(outdir)
    assert back.grid == cset.grid
    for name, arr in cset.arrays.items():
        assert_allclose(back.arrays[name], arr, atol=0.0)


def test_assemble_b_mean_is_minus_effective(bank):
    med, cset, model = bank.solved("checker")
    b = assemble_b(med.C, cset.field("chi1"))
    bbar = b.values.mean(axis=(-2, -1))
    assert np.abs(bbar + model.Cbar).max() <= 1e-9


def test_estimate_bytes():
    # 172 stored components + 64 transient, 8 bytes each on a 64^2 grid
    assert estimate_bytes(2, 64) == 236 * 64 ** 2 * 8
