import numpy as np
import pytest

from src.island_resonances.potential import PotentialSpec, quadratic_saddle_spec
from src.island_resonances.quantize import OperatorMatrix, Provenance, assemble_schrodinger
from src.island_resonances.spectra import (
    CountReport,
    WindowSpec,
    apply_surgery,
    check_window_covered,
    continuum_threshold,
    count_in_box,
    eig_general,
    eig_hermitian,
    extract_resonances,
    gap_violations,
    match_spectra,
    merge_clusters,
    surgery_targets,
)
from src.island_resonances.utils.errors import (
    ConfigValidationError,
    NotHermitian,
    UpperHalfPlaneResonance,
    WindowUncovered,
)
from src.island_resonances.utils.grid import GridSpec

FREE = PotentialSpec(terms=(), asymptotic_depth=0.0, dimension=1)
FREE_GRID = GridSpec(dimension=1, half_width=np.pi, points=32, h=1.0)


def test_harmonic_ladder(harmonic_1d, harmonic_grid):
    result = eig_hermitian(assemble_schrodinger(harmonic_1d, harmonic_grid))
    k = np.arange(10)
    expected = 0.1 * (2 * k + 1)
    assert np.max(np.abs(result.eigenvalues[:10] - expected) / expected) < 1e-8
    assert result.residual_norms.max() < 1e-8
    assert result.eigenvectors.shape == (256, 256)


def test_non_hermitian_input_is_refused():
    matrix = OperatorMatrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex), False, Provenance.P, FREE_GRID)
    with pytest.raises(NotHermitian):
        eig_hermitian(matrix)


def test_free_operator_spectrum_is_rotated_by_two_theta():
    result = eig_general(assemble_schrodinger(FREE, FREE_GRID, theta=0.1))
    values = result.eigenvalues[np.abs(result.eigenvalues) > 1e-8]
    assert np.max(np.abs(np.angle(values) + 0.2)) < 1e-10


def test_general_spectrum_is_sorted():
    values = eig_general(np.diag([2.0 + 1j, -1.0, 2.0 - 1j])).eigenvalues
    assert list(values) == [-1.0, 2.0 - 1j, 2.0 + 1j]


def test_window_is_half_open():
    window = WindowSpec(0.0, 1.0, -1.0, 0.0)
    assert count_in_box([0.0 - 0.5j, 1.0 - 0.5j, 0.5 + 0.0j, 0.5 - 1.0j], window) == 2


def test_window_union_counts_each_point_once():
    window = WindowSpec.r_eps_delta(0.1, 0.2, -0.4, -0.1)
    assert count_in_box([-0.04 - 0.05j, -0.04 + 0.05j, 0.05 + 0.05j], window) == 2


def test_degenerate_window_is_rejected():
    with pytest.raises(ConfigValidationError):
        WindowSpec(1.0, 1.0, 0.0, 1.0)


def test_windows_tile():
    window = WindowSpec.r_delta(0.1, 0.2)
    tiles = window.tile(3, 2)
    assert len(tiles) == 6
    z = window.grid(7, 5)
    assert sum(count_in_box(z, tile) for tile in tiles) == count_in_box(z, window) == 35


def test_merge_clusters():
    reps, mult = merge_clusters([1.0, 1.0 + 1e-10, 2.0])
    assert mult.tolist() == [2, 1]
    assert reps[1] == 2.0


def test_free_operator_has_no_resonances_in_a_covered_window():
    # k = 0 is a bound state of the periodic box, so the window stays off the origin
    window = WindowSpec(0.1, 0.5, -0.01, 0.01)
    resonances = extract_resonances(FREE, FREE_GRID, [0.1, 0.12], window)
    assert resonances.resonances.size == 0
    assert np.all(resonances.resonances.imag <= 1e-8)


def test_extraction_needs_two_angles():
    with pytest.raises(ConfigValidationError):
        extract_resonances(FREE, FREE_GRID, [0.1], WindowSpec(-0.5, 0.5, -0.05, 0.01))


def test_window_below_the_rotated_continuum():
    assert continuum_threshold(FREE) == 0.0
    with pytest.raises(WindowUncovered):
        check_window_covered(FREE, WindowSpec(0.5, 1.0, -0.5, 0.0), 0.1)


def test_confining_potential_needs_no_coverage(harmonic_1d):
    assert continuum_threshold(harmonic_1d) is None
    check_window_covered(harmonic_1d, WindowSpec(0.5, 1.0, -0.5, 0.0), 0.0)


def test_bound_states_are_dilation_stable(harmonic_1d):
    grid = GridSpec(dimension=1, half_width=8.0, points=128, h=0.1)
    window = WindowSpec(0.0, 1.0, -0.05, 0.05)
    resonances = extract_resonances(harmonic_1d, grid, [0.0, 0.05], window, threshold=1e-6)
    assert np.allclose(np.sort(resonances.resonances.real), 0.1 * (2 * np.arange(5) + 1), atol=1e-8)


INVERTED = quadratic_saddle_spec(())
INVERTED_GRID = GridSpec(dimension=1, half_width=6.0, points=256, h=0.1)
INVERTED_WINDOW = WindowSpec(-0.05, 0.05, -0.35, 0.01)


def test_inverted_oscillator_resonances():
    # -h^2 d^2/dx^2 - x^2 has resonances -ih(2k + 1)
    resonances = extract_resonances(INVERTED, INVERTED_GRID, [0.1, 0.12], INVERTED_WINDOW, threshold=1e-3)
    values = resonances.resonances[np.argsort(-resonances.resonances.imag)]
    assert values == pytest.approx([-0.1j, -0.3j], abs=1e-4)


def test_resonances_do_not_depend_on_the_angles():
    first = extract_resonances(INVERTED, INVERTED_GRID, [0.1, 0.12], INVERTED_WINDOW, threshold=1e-3)
    second = extract_resonances(INVERTED, INVERTED_GRID, [0.06, 0.08], INVERTED_WINDOW, threshold=1e-3)
    assert np.sort_complex(first.resonances) == pytest.approx(np.sort_complex(second.resonances), abs=1e-6)


def test_stable_upper_half_plane_values_are_an_error():
    def flipped(theta):
        return assemble_schrodinger(INVERTED, INVERTED_GRID, theta=-theta)

    with pytest.raises(UpperHalfPlaneResonance) as info:
        extract_resonances(INVERTED, INVERTED_GRID, [0.1, 0.12], INVERTED_WINDOW, threshold=1e-3, builder=flipped)
    assert np.allclose(sorted(np.imag(info.value.values)), [0.1, 0.3], atol=1e-4)


def test_window_below_the_resolved_continuum_depth():
    # h^2 N^2 sin(2 theta) = 0.0203 here, while the corners stay inside the rotated ray
    grid = GridSpec(dimension=1, half_width=np.pi, points=32, h=0.01)
    window = WindowSpec(1.0, 2.0, -0.05, 0.01)
    with pytest.raises(WindowUncovered, match="continuum depth"):
        check_window_covered(FREE, window, 0.1, grid)
    check_window_covered(FREE, window, 0.1, FREE_GRID)
    check_window_covered(FREE, WindowSpec(1.0, 2.0, -0.01, 0.01), 0.1, grid)


@pytest.mark.slow
def test_canonical_resonances_are_dilation_stable(canonical):
    grid = GridSpec(dimension=2, half_width=2.5, points=48, h=0.05)
    window = WindowSpec(-0.05, 0.05, -0.05, 1e-8)
    resonances = extract_resonances(canonical, grid, [0.1, 0.12], window)
    later = eig_general(assemble_schrodinger(canonical, grid, theta=0.14)).eigenvalues
    for z in resonances.resonances:
        assert np.min(np.abs(later - z)) < 2.0 * resonances.threshold


def test_hermitian_and_general_solvers_agree():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
    H = 0.5 * (M + M.conj().T)
    hermitian = eig_hermitian(H).eigenvalues
    general = eig_general(H).eigenvalues
    assert np.max(np.abs(general.imag)) < 1e-9
    assert np.max(np.abs(general.real - hermitian)) < 1e-9
    assert hermitian.sum() == pytest.approx(np.trace(H).real, rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_rank_one_update_interlaces(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((20, 20))
    A = 0.5 * (M + M.T)
    v = rng.standard_normal(20)
    before = eig_hermitian(A).eigenvalues
    after = eig_hermitian(A + np.outer(v, v)).eigenvalues
    assert np.all(after >= before - 1e-10)
    assert np.all(after[:-1] <= before[1:] + 1e-10)


def test_match_spectra_pairs_nearby_values():
    window = WindowSpec(-1.0, 1.0, -1.0, 1.0)
    report = match_spectra([-0.5, 0.0, 0.5], [-0.5 - 1e-4j, 1e-3 - 1e-4j, 0.5 - 2e-4j], window, 0.1)
    assert len(report.pairs) == 3
    assert report.max_distance == pytest.approx(abs(1e-3 - 1e-4j))
    assert not report.cardinality_mismatch
    assert report.ambiguous == 0


def test_match_spectra_reports_unmatched_items():
    window = WindowSpec(-1.0, 1.0, -1.0, 1.0)
    report = match_spectra([-0.5, 0.5], [-0.5 - 1e-4j], window, 0.1)
    assert report.unmatched_interior == 1
    assert report.cardinality_mismatch
    assert report.to_dict()["cardinality_mismatch"]


def test_match_spectra_drops_edge_items():
    window = WindowSpec(-1.0, 1.0, -1.0, 1.0)
    report = match_spectra([-0.995, 0.0], [0.0 - 1e-4j], window, 0.1)
    assert report.dropped == 1
    assert not report.cardinality_mismatch


def test_match_spectra_drops_items_on_the_horizontal_edges():
    report = match_spectra([0.0], [0.0 - 1e-4j, 0.3 - 0.995j], WindowSpec(-1.0, 1.0, -1.0, 1.0), 0.1)
    assert report.dropped == 1
    assert len(report.pairs) == 1
    below_axis = WindowSpec(-1.0, 1.0, -1.0, -0.2)
    report = match_spectra([], [0.0 - 0.205j, 0.0 - 0.5j], below_axis, 0.1)
    assert report.dropped == 1
    assert report.unmatched_resonances == 1


def test_match_spectra_keeps_a_top_edge_on_the_real_axis():
    window = WindowSpec.theorem_b(-0.5, 0.5, 0.1, 0.2)
    report = match_spectra([0.0], [0.0 - 1e-4j], window, 0.1)
    assert report.dropped == 0
    assert len(report.pairs) == 1


def test_match_ambiguity_only_counts_unmatched_alternatives():
    window = WindowSpec(-1.0, 1.0, -1.0, 1.0)
    assert match_spectra([0.0, 0.0005], [0.0001, 0.0008], window, 0.1).ambiguous == 0
    assert match_spectra([0.0], [0.0001, 0.0002], window, 0.1).ambiguous == 1


LEVELS = (-0.5, 0.5)
VALUES = np.array([-1.0, -0.53, -0.5, -0.46, 0.0, 0.52, 1.0])


def test_surgery_targets():
    indices, moved = surgery_targets(VALUES, 1.0, 0.2, LEVELS)
    assert sorted(indices.tolist()) == [1, 2, 3, 5]
    assert dict(zip(indices.tolist(), moved.tolist())) == pytest.approx({1: -0.6, 2: -0.6, 3: -0.4, 5: 0.6})


def test_overlapping_surgery_windows():
    with pytest.raises(ConfigValidationError):
        surgery_targets(VALUES, 1.0, 0.2, (0.0, 0.1))


def test_surgery_opens_the_gaps():
    target = OperatorMatrix(np.diag(VALUES).astype(complex), True, Provenance.P_INT, FREE_GRID)
    eigendata = eig_hermitian(target)
    result = apply_surgery(eigendata, target, np.ones(VALUES.size), 1.0, 0.2, LEVELS)
    after = np.linalg.eigvalsh(result.matrix.data)
    assert gap_violations(after, 1.0, 0.2, LEVELS).size == 0
    assert np.allclose(after, [-1.0, -0.6, -0.6, -0.4, 0.0, 0.6, 1.0])
    assert result.matrix.provenance is Provenance.P_SURGERY
    assert not result.empty_window


def test_surgery_with_empty_windows_is_a_no_op():
    target = OperatorMatrix(np.diag([-1.0, 1.0]).astype(complex), True, Provenance.P_INT, FREE_GRID)
    result = apply_surgery(eig_hermitian(target), target, np.ones(2), 1.0, 0.2, LEVELS)
    assert result.empty_window
    assert result.matrix is target


def test_surgery_needs_eigenvectors():
    target = OperatorMatrix(np.diag(VALUES).astype(complex), True, Provenance.P_INT, FREE_GRID)
    with pytest.raises(ValueError):
        apply_surgery(eig_hermitian(target, vectors=False), target, np.ones(VALUES.size), 1.0, 0.2, LEVELS)


def test_count_report_relative_error():
    report = CountReport("demo", WindowSpec(0.0, 1.0, -1.0, 0.0), 10, 9.0, 0.1, 1)
    assert report.discrepancy == pytest.approx(1.0)
    assert report.relative_error == pytest.approx(0.1)
    assert report.to_dict()["window"]["role"] == "R"
