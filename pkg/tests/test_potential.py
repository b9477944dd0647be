import numpy as np
import pytest

from src.island_resonances.potential import (
    DEFAULT_ALPHA,
    PotentialSpec,
    Region,
    build_sea_fill,
    build_well_fill,
    classify_sublevel,
    eval_potential,
    fill_energies,
    fill_geometry,
    find_saddle_and_normalize,
    frame_of,
    harmonic_spec,
    neck_gap,
    quadratic_saddle_spec,
    radial_toy_spec,
    saddle_frame,
    scale_functions,
    v_eps,
)
from src.island_resonances.utils.errors import NoRoot, WrongSignature
from src.island_resonances.utils.fills import fill_lattice, phase_fill_margin
from src.island_resonances.utils.grid import GridSpec

TOL = 1e-10
EPS = 0.05
RADIUS = 0.15
CANONICAL_GRID = GridSpec(dimension=2, half_width=2.5, points=48, h=0.05)


def test_harmonic_value_gradient_hessian(harmonic_1d):
    pv = eval_potential(harmonic_1d, (1.5,), order=2)
    assert pv.value == pytest.approx(2.25)
    assert pv.gradient == pytest.approx([3.0])
    assert pv.hessian[0, 0] == pytest.approx(2.0)


def test_complex_points_are_evaluated_holomorphically(harmonic_1d):
    z = np.exp(0.1j) * np.array([[2.0]])
    assert eval_potential(harmonic_1d, z).value[0] == pytest.approx(4.0 * np.exp(0.2j))


def test_bad_order_is_rejected(harmonic_1d):
    with pytest.raises(ValueError):
        eval_potential(harmonic_1d, (0.0,), order=3)


def test_model_saddle_is_found_from_an_offset_guess():
    spec, frame = find_saddle_and_normalize(quadratic_saddle_spec((1.0,)), (0.3, -0.2))
    assert np.allclose(spec.saddle, (0.0, 0.0), atol=TOL)
    assert frame.signature == (1, 1)
    assert frame.kappa == pytest.approx(2.0)
    assert frame.scale == pytest.approx(1.0)
    assert eval_potential(spec, spec.saddle).value == pytest.approx(0.0, abs=TOL)


def test_frame_x_n_points_away_from_the_well(model_saddle):
    spec, frame = model_saddle
    well_side = frame.to_frame(np.asarray(spec.well_point))
    assert well_side[-1] < 0


def test_frame_maps_are_inverse(model_saddle):
    _, frame = model_saddle
    y = np.array([0.3, -0.7])
    assert np.allclose(frame.to_frame(frame.to_original(y)), y)
    eta = np.array([-0.1, 0.4])
    assert np.allclose(frame.momentum_to_frame(frame.momentum_to_original(eta)), eta)


def test_frame_symbol_is_the_normal_form(model_saddle):
    spec, frame = model_saddle
    y, eta = np.array([0.2, 0.3]), np.array([-0.4, 0.5])
    x, xi = frame.to_original(y), frame.momentum_to_original(eta)
    p = np.sum(xi**2) + eval_potential(spec, x).value
    q = np.concatenate([y[:-1], eta[:-1]]) @ frame.tangential_form() @ np.concatenate([y[:-1], eta[:-1]])
    assert p / frame.kappa == pytest.approx(0.5 * (eta[-1] ** 2 - y[-1] ** 2) + 0.5 * q)


def test_minimum_has_wrong_signature():
    spec = harmonic_spec(2)
    with pytest.raises(WrongSignature):
        saddle_frame(spec, (0.0, 0.0))


def test_island_1d_saddle_is_a_barrier_top(island_1d):
    frame = frame_of(island_1d)
    assert frame.signature == (0, 1)
    assert abs(island_1d.saddle[0]) < 0.05
    assert eval_potential(island_1d, (-0.75,)).value < -0.5


def test_v_eps_adds_the_bump_at_the_saddle(island_1d):
    assert v_eps(island_1d, 0.05, 0.5, island_1d.saddle) == pytest.approx(0.05, abs=TOL)


def test_classify_island_1d(island_1d, island_grid):
    labels = classify_sublevel(island_1d, -0.1, island_grid)

    def at(x):
        return Region(labels.labels.flat[island_grid.nearest_index((x,))])

    assert at(-0.75) == Region.WELL
    assert at(-3.5) == Region.SEA
    assert at(3.5) == Region.SEA
    assert at(island_1d.saddle[0]) == Region.ISLAND
    assert not labels.well_empty
    assert set(labels.to_frame()["label"]) <= {"island", "well", "sea", "boundary"}


def test_classify_empty_sublevel_is_all_island(harmonic_1d, harmonic_grid):
    labels = classify_sublevel(harmonic_1d, -1.0, harmonic_grid)
    assert labels.well_empty and labels.sea_empty


def test_radial_toy_well_without_sea():
    grid = GridSpec(dimension=2, half_width=2.0, points=40)
    labels = classify_sublevel(radial_toy_spec(2), 0.0, grid)
    assert labels.sea_empty
    assert not labels.well_empty


def test_neck_gap_of_the_model_saddle(model_saddle):
    spec, _ = model_saddle
    assert neck_gap(spec, 0.04, 1.0, with_bump=False) == pytest.approx(2.0 * np.sqrt(0.04), rel=1e-8)


def test_neck_gap_above_the_barrier(model_saddle):
    spec, _ = model_saddle
    with pytest.raises(NoRoot):
        neck_gap(spec, 0.04, -1.0, with_bump=False)


def test_fill_energies_order():
    E, E_prime = fill_energies(0.05, 1.0, 0.8)
    assert E == pytest.approx(0.0)
    assert E_prime == pytest.approx(0.01)
    with pytest.raises(ValueError):
        fill_energies(0.05, 0.8, 1.0)


def test_scale_functions_at_the_origin():
    scales = scale_functions(0.04)
    assert scales.big_r(np.zeros(2)) == pytest.approx(0.2)
    assert scales.small_r(np.zeros(2)) == pytest.approx(0.2)
    assert scales.phase_r(np.zeros(2), np.array([0.0, 0.0])) == pytest.approx(0.2)


def test_spec_json_round_trip_keeps_the_fingerprint(island_1d):
    restored = PotentialSpec.from_json(island_1d.to_json())
    assert restored.fingerprint() == island_1d.fingerprint()


def test_term_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        PotentialSpec(terms=harmonic_spec(2).terms, asymptotic_depth=0.0, dimension=1)


def test_canonical_normalization(canonical):
    pv = eval_potential(canonical, canonical.saddle, order=1)
    assert np.linalg.norm(pv.gradient) < 1e-9
    assert abs(pv.value) < 1e-12
    assert canonical.energy_shift == 0.0
    assert canonical.asymptotic_depth > 0
    far = eval_potential(canonical, (30.0, 0.0)).value
    assert far == pytest.approx(-canonical.asymptotic_depth, abs=1e-3)


def test_canonical_has_a_well_and_a_sea(canonical):
    grid = GridSpec(dimension=2, half_width=2.5, points=160)
    labels = classify_sublevel(canonical, -0.1 * canonical.asymptotic_depth, grid)
    assert not labels.well_empty
    assert not labels.sea_empty


def test_normalization_is_idempotent(canonical):
    again, _ = find_saddle_and_normalize(canonical, canonical.saddle)
    assert again.asymptotic_depth == pytest.approx(canonical.asymptotic_depth, abs=1e-12)
    assert again.energy_shift == 0.0
    assert np.allclose(again.saddle, canonical.saddle, atol=TOL)


def test_neck_gap_approaches_the_quadratic_model(canonical):
    ratios = [neck_gap(canonical, eps, 1.0, with_bump=False) / (2.0 * np.sqrt(eps)) for eps in (0.1, 0.05, 0.025)]
    errors = np.abs(np.array(ratios) - 1.0)
    assert errors.max() < 0.25
    assert errors[-1] < errors[0]


def test_neck_closes_at_the_bump_top(canonical):
    assert neck_gap(canonical, EPS, 0.0) == 0.0


@pytest.fixture(scope="module")
def canonical_fills(canonical):
    E, E_prime = fill_energies(EPS, 1.0, 0.8)
    sea = build_sea_fill(canonical, EPS, E, E_prime, RADIUS, CANONICAL_GRID)
    well = build_well_fill(canonical, EPS, E, E_prime, RADIUS, CANONICAL_GRID)
    return sea, well


@pytest.mark.parametrize("points", [96, 192])
def test_sea_constant_does_not_follow_the_operator_grid(canonical, canonical_fills, points):
    E, E_prime = fill_energies(EPS, 1.0, 0.8)
    grid = GridSpec(dimension=2, half_width=2.5, points=points, h=0.05)
    refined = build_sea_fill(canonical, EPS, E, E_prime, RADIUS, grid)
    assert refined.constant == pytest.approx(canonical_fills[0].constant, rel=0.05)
    assert refined.grid == fill_lattice(grid)


def test_sea_margin_is_tied_to_the_constant(canonical_fills):
    sea, _ = canonical_fills
    assert sea.margin == pytest.approx(2.0 / sea.constant, rel=1e-6)


def test_sea_fill_inequality(canonical, canonical_fills):
    sea, _ = canonical_fills
    labels, r2, to_well, _ = fill_geometry(canonical, EPS, DEFAULT_ALPHA, sea.energy, sea.grid)
    checked = to_well > RADIUS
    ratios = (labels.potential + sea.W - sea.energy_prime)[checked] / r2[checked]
    assert ratios.min() >= (1.0 - 1e-9) / sea.constant
    assert not sea.W[labels.well_mask].any()


def test_phase_fill_margin_is_nonnegative():
    xi = np.linspace(-3.0, 3.0, 121)
    assert phase_fill_margin(0.3, xi).min() >= -1e-15
    assert phase_fill_margin(0.0, xi) == pytest.approx(xi**2 / 2.0)


def test_well_fill_sides_and_cutoff(canonical, canonical_fills):
    _, well = canonical_fills
    labels, _, to_well, _ = fill_geometry(canonical, EPS, DEFAULT_ALPHA, well.energy, well.grid)
    assert well.pointwise_margin >= 0
    assert well.beta_floor > 0
    assert not well.beta[labels.sea_mask].any()
    assert np.all(well.chi_u[to_well <= RADIUS / 2] == 1.0)
