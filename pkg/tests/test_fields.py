import numpy as np
import pytest
from numpy.testing import assert_allclose

from perielast.fields import (CellField, CellGrid, ConstantMedium,
                              LaminateMedium, SmoothMedium, VoxelMedium,
                              build_medium, cell_average, medium_from_config,
                              pointwise_margin, read_voxel_file, smooth_values,
                              spectral_divergence, spectral_gradient,
                              write_voxel_file)
from perielast.tensors import (LamePair, check_symmetries, convexity_margin,
                               isotropic_tensor)


def scalar_field(grid, fn):
    ys = grid.coords()
    return CellField(grid, 0, fn(*ys))


def test_grid_validation():
    with pytest.raises(ValueError):
        CellGrid(1, 16)
    with pytest.raises(ValueError):
        CellGrid(2, 12)
    with pytest.raises(ValueError):
        CellGrid(2, 4)
    g = CellGrid(2, 16)
    assert g.spacing == 1.0 / 16
    assert g.shape == (16, 16)
    assert g.axes()[1] == 1.0 / 16


def test_freq_conventions():
    g = CellGrid(2, 8)
    m = g.freq()
    mf = g.freq_full()
    # same except at the Nyquist slot, which only freq_full keeps (signed)
    assert m[4] == 0.0
    assert mf[4] == -4.0
    m[4] = -4.0
    assert_allclose(m, mf, atol=0.0)
    assert sorted(mf) == [-4, -3, -2, -1, 0, 1, 2, 3]


def test_cell_field_shape_checks():
    g = CellGrid(2, 8)
    with pytest.raises(ValueError):
        CellField(g, 1, np.zeros((8, 8)))
    f = CellField(g, 1, np.zeros((2, 8, 8)))
    assert f.grid_axes == (-2, -1)
    with pytest.raises(TypeError):
        cell_average(np.zeros((8, 8)))


def test_gradient_exact_on_waves():
    g = CellGrid(2, 16)
    f = scalar_field(g, lambda y1, y2: np.cos(2 * np.pi * (2 * y1 - 3 * y2) + 0.3))
    df = spectral_gradient(f)
    assert df.rank == 1 and not np.iscomplexobj(df.values)
    y1, y2 = g.coords()
    s = -np.sin(2 * np.pi * (2 * y1 - 3 * y2) + 0.3)
    assert_allclose(df.values[0], 2 * np.pi * 2 * s, atol=1e-12)
    assert_allclose(df.values[1], -2 * np.pi * 3 * s, atol=1e-12)


def test_gradient_complex_wave():
    g = CellGrid(2, 16)
    y1, y2 = g.coords()
    w = np.exp(2j * np.pi * (y1 + 2 * y2))
    f = CellField(g, 0, w)
    df = spectral_gradient(f)
    assert np.iscomplexobj(df.values)
    assert_allclose(df.values[0], 2j * np.pi * w, atol=1e-12)
    assert_allclose(df.values[1], 4j * np.pi * w, atol=1e-12)


def test_gradient_drops_nyquist():
    # the alternating mode carries no sign information about its derivative
    g = CellGrid(2, 8)
    f = scalar_field(g, lambda y1, y2: np.cos(2 * np.pi * 4 * y1))
    df = spectral_gradient(f)
    assert_allclose(df.values, 0.0, atol=1e-13)


def test_divergence_contracts_first_axis():
    g = CellGrid(2, 16)
    f = scalar_field(g, lambda y1, y2: np.sin(2 * np.pi * y1) * np.cos(2 * np.pi * y2))
    lap = spectral_divergence(spectral_gradient(f))
    assert_allclose(lap.values, -2 * (2 * np.pi) ** 2 * f.values, atol=1e-11)
    with pytest.raises(ValueError):
        spectral_divergence(f)


def test_smoothing_kernel():
    g = CellGrid(2, 32)
    f = scalar_field(g, lambda y1, y2: 1.5 + np.cos(2 * np.pi * 3 * y1))
    out = smooth_values(f.values, g, 2.0)
    # mean preserved, single mode damped by the Gaussian factor
    assert_allclose(out.mean(), 1.5, atol=1e-13)
    sigma = 2.0 / 32
    damp = np.exp(-2 * np.pi ** 2 * sigma ** 2 * 9)
    assert_allclose(out - 1.5, damp * (f.values - 1.5), atol=1e-13)
    assert smooth_values(f.values, g, 0.0) is f.values


def test_constant_medium():
    g = CellGrid(2, 8)
    med = build_medium(ConstantMedium(LamePair(2.0, 1.0), rho=1.2), g)
    C0 = isotropic_tensor((2.0, 1.0), 2).entries
    assert_allclose(med.C.values, C0[..., None, None] * np.ones(g.shape), atol=0.0)
    assert_allclose(med.rho.values, 1.2, atol=0.0)
    assert med.min_margin == pytest.approx(2.0)
    # explicit tensor overrides the Lame pair
    C1 = isotropic_tensor((0.5, 0.25), 2)
    med = build_medium(ConstantMedium(LamePair(2.0, 1.0), tensor=C1), g)
    assert med.C.values[0, 0, 0, 0, 0, 0] == 1.0


def test_laminate_membership():
    g = CellGrid(2, 64)
    spec = LaminateMedium((0.25, 0.75), (LamePair(0.0, 1.0), LamePair(0.0, 2.0)),
                          (1.0, 3.0))
    med = build_medium(spec, g)
    mu_line = med.C.values[0, 1, 0, 1, :, 0]
    assert np.all(mu_line[:16] == 1.0)
    assert np.all(mu_line[16:] == 2.0)
    # constant across the transverse axis
    line = med.C.values[..., 0, :]
    assert np.abs(line - line[..., :1]).max() == 0.0
    assert_allclose(cell_average(med.rho), 0.25 * 1.0 + 0.75 * 3.0, rtol=1e-14)

    spec = LaminateMedium((0.25, 0.75), (LamePair(0.0, 1.0), LamePair(0.0, 2.0)),
                          (1.0, 3.0), axis=1)
    med = build_medium(spec, g)
    assert np.all(med.C.values[0, 1, 0, 1, 0, :16] == 1.0)

    with pytest.raises(ValueError):
        build_medium(LaminateMedium((0.5, 0.6), (LamePair(0.0, 1.0),) * 2,
                                    (1.0, 1.0)), g)


def test_voxel_medium_tiling():
    g = CellGrid(2, 8)
    ids = np.array([[0, 1], [1, 0]])
    med = build_medium(VoxelMedium(ids, (LamePair(0.0, 1.0), LamePair(0.0, 2.0)),
                                   (1.0, 2.0)), g)
    r = med.rho.values
    assert np.all(r[:4, :4] == 1.0) and np.all(r[:4, 4:] == 2.0)
    assert np.all(r[4:, :4] == 2.0) and np.all(r[4:, 4:] == 1.0)
    with pytest.raises(ValueError):
        build_medium(VoxelMedium(np.zeros((3, 3), dtype=int),
                                 (LamePair(0.0, 1.0),), (1.0,)), g)
    with pytest.raises(ValueError):
        build_medium(VoxelMedium(np.zeros(4, dtype=int),
                                 (LamePair(0.0, 1.0),), (1.0,)), g)


def test_smooth_medium_fields():
    g = CellGrid(2, 32)
    spec = SmoothMedium(LamePair(2.0, 1.0), rho0=1.5,
                        mu_terms=((0.3, (1, 0), 0.4),),
                        rho_terms=((0.2, (0, 1), 0.0),))
    med = build_medium(spec, g)
    y1, y2 = g.coords()
    mu = 1.0 + 0.3 * np.cos(2 * np.pi * y1 + 0.4)
    assert_allclose(med.C.values[0, 1, 0, 1], mu, atol=1e-14)
    assert_allclose(med.rho.values, 1.5 + 0.2 * np.cos(2 * np.pi * y2), atol=1e-14)


def test_smooth_medium_aniso_slot_symmetrized():
    g = CellGrid(2, 16)
    spec = SmoothMedium(LamePair(2.0, 1.0),
                        aniso_terms=(((0, 0, 0, 1), 0.4, (1, 0), 0.0),))
    med = build_medium(spec, g)
    y1, _ = g.coords()
    wave = 0.4 * np.cos(2 * np.pi * y1)
    # the unit slot spreads over its four symmetry images
    assert_allclose(med.C.values[0, 0, 0, 1], 0.25 * wave, atol=1e-14)
    assert_allclose(med.C.values[1, 0, 0, 0], 0.25 * wave, atol=1e-14)
    sym = check_symmetries(med.C.values[..., 3, 5])
    assert sym["minor"] == 0.0 and sym["major"] == 0.0


def test_build_medium_guards():
    g = CellGrid(2, 16)
    with pytest.raises(ValueError):
        # mu dips through zero somewhere on the cell
        build_medium(SmoothMedium(LamePair(2.0, 1.0),
                                  mu_terms=((1.5, (1, 0), 0.0),)), g)
    with pytest.raises(ValueError):
        build_medium(SmoothMedium(LamePair(2.0, 1.0),
                                  rho_terms=((2.0, (1, 0), 0.0),)), g)
    with pytest.raises(TypeError):
        build_medium(object(), g)


def test_pointwise_margin_matches_constant():
    g = CellGrid(2, 8)
    med = build_medium(ConstantMedium(LamePair(1.0, 0.7)), g)
    margins = pointwise_margin(med.C.values, 2)
    assert_allclose(margins, convexity_margin(isotropic_tensor((1.0, 0.7), 2)),
                    rtol=1e-13)


def test_digest_distinguishes_media():
    g = CellGrid(2, 8)
    a = build_medium(ConstantMedium(LamePair(2.0, 1.0)), g)
    b = build_medium(ConstantMedium(LamePair(2.0, 1.1)), g)
    assert a.digest() == build_medium(ConstantMedium(LamePair(2.0, 1.0)), g).digest()
    assert a.digest() != b.digest()


def test_voxel_file_round_trip(tmp_path):
    ids = np.array([[0, 1, 2], [2, 1, 0], [1, 0, 2]], dtype=np.uint8)
    path = tmp_path / "tile.vox"
    write_voxel_file(path, ids)
    back = read_voxel_file(path)
    assert back.dtype == np.uint8
    assert_allclose(back, ids, atol=0)

    with open(path, "r+b") as fh:
        fh.readline()
        fh.truncate(fh.tell() + 4)
    with pytest.raises(ValueError):
        read_voxel_file(path)

    bad = tmp_path / "bad.vox"
    bad.write_bytes(b"raster 2 3 3\n" + bytes(9))
    with pytest.raises(ValueError):
        read_voxel_file(bad)


def test_medium_from_config(tmp_path):
    spec = medium_from_config({"kind": "constant", "lam": 2.0, "mu": 1.0,
                               "rho": 1.2})
    assert isinstance(spec, ConstantMedium) and spec.rho == 1.2

    spec = medium_from_config({"kind": "laminate", "fractions": [0.5, 0.5],
                               "phases": [{"lam": 0.0, "mu": 1.0},
                                          {"lam": 0.0, "mu": 3.0, "rho": 2.0}]})
    assert isinstance(spec, LaminateMedium)
    assert spec.densities == (1.0, 2.0)

    spec = medium_from_config({"kind": "smooth", "lam": 2.0, "mu": 1.0,
                               "lam_terms": [{"amp": 0.2, "freq": [1, 0],
                                              "phase": 0.5}],
                               "aniso_terms": [{"slot": [0, 0, 0, 1],
                                                "amp": 0.3, "freq": [1, 1]}]})
    assert spec.lam_terms == ((0.2, (1, 0), 0.5),)
    assert spec.aniso_terms == (((0, 0, 0, 1), 0.3, (1, 1), 0.0),)

    write_voxel_file(tmp_path / "t.vox", np.array([[0, 1], [1, 0]], dtype=np.uint8))
    spec = medium_from_config({"kind": "voxel", "file": "t.vox",
                               "phases": [{"lam": 0.0, "mu": 1.0},
                                          {"lam": 0.0, "mu": 2.0}]},
                              base_dir=str(tmp_path))
    assert isinstance(spec, VoxelMedium)

    with pytest.raises(ValueError):
        medium_from_config({"kind": "mystery"})
