import numpy as np
import pytest

from src.island_resonances.potential import PotentialSpec, island_1d_spec
from src.island_resonances.quantize import (
    OperatorMatrix,
    Provenance,
    assemble_family,
    assemble_gaussian_weyl,
    assemble_schrodinger,
    assemble_well_fill_op,
    build_family_fills,
    dilated_family,
    ellipticity_margin,
    family_from_parts,
    kinetic_matrix,
    smallest_singular_value,
)
from src.island_resonances.spectra import apply_surgery, eig_hermitian, gap_violations
from src.island_resonances.utils.errors import GridTooCoarse
from src.island_resonances.utils.fills import empty_fills
from src.island_resonances.utils.grid import GridSpec

EPS = 0.05
RADIUS = 0.15
FREE = PotentialSpec(terms=(), asymptotic_depth=0.0, dimension=1)


@pytest.fixture(scope="module")
def island_family(island_1d):
    grid = GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)
    return assemble_family(island_1d, EPS, 0.2, -0.4, -0.1, grid, radius=RADIUS)


def test_kinetic_matrix_acts_exactly_on_fourier_modes():
    grid = GridSpec(dimension=1, half_width=np.pi, points=32)
    x = grid.axis()
    mode = np.cos(3 * x)
    assert np.allclose(kinetic_matrix(grid) @ mode, 9.0 * mode)


def test_kinetic_matrix_2d_is_a_kronecker_sum():
    grid = GridSpec(dimension=2, half_width=np.pi, points=8)
    mesh = grid.mesh()
    mode = (np.cos(mesh[..., 0]) * np.cos(2 * mesh[..., 1])).ravel()
    assert np.allclose(kinetic_matrix(grid) @ mode, 5.0 * mode)


def test_schrodinger_is_hermitian_without_dilation(harmonic_1d, harmonic_grid):
    P = assemble_schrodinger(harmonic_1d, harmonic_grid)
    assert P.hermitian_flag
    assert P.provenance is Provenance.P
    assert P.hermitian_defect() < 1e-12


def test_dilation_rotates_the_kinetic_part():
    grid = GridSpec(dimension=1, half_width=np.pi, points=16, h=1.0)
    P0 = assemble_schrodinger(FREE, grid)
    P = assemble_schrodinger(FREE, grid, theta=0.1)
    assert not P.hermitian_flag
    assert np.allclose(P.data, np.exp(-0.2j) * P0.data)


def test_narrow_potential_is_rejected():
    coarse = GridSpec(dimension=1, half_width=4.0, points=8)
    with pytest.raises(GridTooCoarse):
        assemble_schrodinger(island_1d_spec(), coarse)


def test_gaussian_weyl_trace_matches_phase_space_integral():
    # tr Op(eps e^{-(x^2 + xi^2)/eps}) = (2 pi h)^{-1} pi eps^2
    grid = GridSpec(dimension=1, half_width=4.0, points=256, h=0.01)
    bump = assemble_gaussian_weyl(0.1, 1.0, grid)
    assert np.trace(bump.data).real == pytest.approx(0.5, rel=1e-6)
    assert bump.hermitian_defect() < 1e-12


def test_gaussian_weyl_is_positive():
    grid = GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)
    values = np.linalg.eigvalsh(assemble_gaussian_weyl(0.1, 1.0, grid).data)
    assert values.min() > -1e-10


def test_gaussian_weyl_without_bump_is_zero():
    grid = GridSpec(dimension=1, half_width=4.0, points=16)
    assert not assemble_gaussian_weyl(0.0, 0.5, grid).data.any()


def test_unresolved_bump_is_rejected():
    grid = GridSpec(dimension=1, half_width=4.0, points=16)
    with pytest.raises(GridTooCoarse):
        assemble_gaussian_weyl(1e-4, 0.5, grid)


def test_empty_well_fill_is_zero():
    grid = GridSpec(dimension=1, half_width=4.0, points=16)
    _, well = empty_fills(grid)
    assert not assemble_well_fill_op(well.beta, well.chi_u, grid).data.any()


def test_constant_well_fill_is_bounded_below_and_has_the_weyl_trace():
    grid = GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)
    b = 0.3
    fill = assemble_well_fill_op(np.full(grid.half_step().shape, b), np.ones(grid.shape), grid)
    operator = grid.h**2 * kinetic_matrix(grid) + fill.data.real
    assert np.linalg.eigvalsh(operator).min() >= b - grid.h
    # (2 pi h)^{-1} int int b e^{-xi^2 / 2b} dxi dx over the box
    expected = b * np.sqrt(2.0 * np.pi * b) * 2.0 * grid.half_width / (2.0 * np.pi * grid.h)
    assert np.trace(fill.data).real == pytest.approx(expected, rel=0.02)


def test_well_fill_needs_half_step_beta():
    grid = GridSpec(dimension=1, half_width=4.0, points=16)
    with pytest.raises(ValueError):
        assemble_well_fill_op(np.ones(16), np.ones(16), grid)


def test_family_relations(island_family):
    f = island_family
    assert np.allclose(f.P_eps.data, f.P.data + f.bump.data)
    assert np.allclose(f.P_ext.data, f.P_eps.data + f.fill.data)
    assert f.P_int.hermitian_flag and f.P_int.hermitian_defect() < 1e-12
    assert f.P_ext.provenance is Provenance.P_EXT


def test_fills_stay_on_their_sides(island_1d, island_family):
    sea, well = island_family.sea_fill, island_family.well_fill
    assert np.all(sea.W >= 0)
    assert np.all(well.beta >= 0)
    assert sea.constant > 0
    assert well.beta_floor > 0
    assert np.all((well.chi_u >= 0) & (well.chi_u <= 1))


def test_family_from_parts_rebuilds_the_family(island_family):
    f = island_family
    rebuilt = family_from_parts(f.P, f.bump, f.fill, f.sea_fill, f.well_fill)
    assert np.array_equal(rebuilt.P_int.data, f.P_int.data)
    assert np.array_equal(rebuilt.P_ext.data, f.P_ext.data)


def test_spectral_fill_variant_lifts_the_well(island_1d):
    grid = GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)
    fills = build_family_fills(island_1d, EPS, 1.0, 0.8, RADIUS, grid)
    family = assemble_family(island_1d, EPS, 0.2, -0.4, -0.1, grid, fills=fills, fill_mode="spectral")
    assert family.fill.hermitian_defect() < 1e-10
    assert np.linalg.eigvalsh(family.fill.data).min() > -1e-10


def test_unknown_fill_mode(island_1d):
    grid = GridSpec(dimension=1, half_width=4.0, points=128, h=0.05)
    with pytest.raises(ValueError):
        assemble_family(island_1d, EPS, 0.2, -0.4, -0.1, grid, radius=RADIUS, fill_mode="mirror")


def test_dilated_family_carries_the_fill_undeformed(island_1d, island_family):
    grid = island_family.P.grid.with_theta(0.1)
    dilated = dilated_family(island_1d, grid, EPS, 0.5, island_family.fill)
    assert set(dilated) == {"P", "P_eps", "P_ext"}
    assert np.allclose(dilated["P_ext"].data - dilated["P_eps"].data, island_family.fill.data)
    assert not dilated["P_ext"].hermitian_flag


def test_operator_matrix_file_round_trip(tmp_path, harmonic_1d):
    grid = GridSpec(dimension=1, half_width=8.0, points=16, h=0.1)
    P = assemble_schrodinger(harmonic_1d, grid)
    P.save(tmp_path / "P.bin")
    loaded = OperatorMatrix.load(tmp_path / "P.bin")
    assert np.array_equal(loaded.data, P.data)
    assert loaded.provenance is Provenance.P and loaded.hermitian_flag


def test_ellipticity_margin_is_positive_away_from_the_energy(island_1d, island_family):
    margin = ellipticity_margin(island_1d, EPS, 0.5, island_family.well_fill, [-5.0])
    assert margin > 0


def test_smallest_singular_value_of_a_diagonal():
    value, per_z = smallest_singular_value(np.diag([1.0, 2.0, 3.0]), [1.5, 2.9])
    assert value == pytest.approx(0.1)
    assert per_z == pytest.approx([0.5, 0.1])


def test_surgery_on_the_interior_operator_leaves_other_eigenvalues(island_family):
    f = island_family
    eigendata = eig_hermitian(f.P_int, vectors=True)
    level = eigendata.eigenvalues[10] / EPS
    levels = (level, level + 1.0)
    result = apply_surgery(eigendata, f.P_int, np.ones(f.P.grid.side), EPS, 0.2, levels)
    after = np.linalg.eigvalsh(result.matrix.data)
    untouched = np.delete(eigendata.eigenvalues, result.moved)
    displacement = np.max(np.min(np.abs(untouched[:, None] - after[None, :]), axis=1))
    assert result.moved.size >= 1
    assert gap_violations(after, EPS, 0.2, levels).size == 0
    assert displacement < 1e-6 * EPS
