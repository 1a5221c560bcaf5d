import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalent.mm_space import (
    CacheFormatError,
    DistanceMatrix,
    MatrixCache,
    RepresentationError,
    SampledSpace,
    arc_semimetric,
    check_matrix,
    check_semimetric,
    constant_labeling,
    cut_semimetric,
    eval_matrix,
    hamming_semimetric,
    interval_labeling,
    matrix_digest,
    read_matrix,
    symbol_labeling,
    weighted_sum_semimetric,
    write_matrix,
    zero_semimetric,
)

torus_points = st.lists(st.floats(0, 1, exclude_max=True, allow_nan=False), min_size=1, max_size=9)


def test_one_point_space_gives_zero_matrix():
    m = eval_matrix(SampledSpace(np.array([0.3])), arc_semimetric())
    assert m.values.shape == (1, 1) and m.values[0, 0] == 0.0


def test_arc_entries_on_quarter_points():
    m = eval_matrix(SampledSpace(np.array([0.0, 0.25, 0.5])), arc_semimetric()).values
    assert m[0, 1] == 0.25 and m[0, 2] == 0.5 and m[1, 2] == 0.25


def test_arc_wraps_around():
    assert arc_semimetric()(0.05, 0.95) == pytest.approx(0.1)


def test_cut_single_cell_is_all_zero():
    space = SampledSpace(np.array([0.1, 0.4, 0.8]))
    assert not eval_matrix(space, cut_semimetric(constant_labeling())).values.any()
    assert not eval_matrix(space, zero_semimetric()).values.any()


def test_cut_same_and_different_cells():
    rho = cut_semimetric(interval_labeling([0.5]))
    assert rho(0.1, 0.4) == 0.0
    assert rho(0.1, 0.6) == 1.0
    assert rho.bound == 1.0


def test_cut_by_symbol():
    words = np.array([[0, 1], [0, 0], [1, 1]], dtype=np.uint8)
    m = eval_matrix(SampledSpace(words), cut_semimetric(symbol_labeling(0))).values
    assert m.tolist() == [[0, 0, 1], [0, 0, 1], [1, 1, 0]]


@given(torus_points, st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4, unique=True))
def test_cut_is_a_semimetric(xs, breaks):
    rho = cut_semimetric(interval_labeling(sorted(breaks)))
    assert check_semimetric(SampledSpace(np.array(xs)), rho).ok


@given(torus_points)
def test_arc_is_a_semimetric(xs):
    assert check_semimetric(SampledSpace(np.array(xs)), arc_semimetric()).ok


def _pair_space(a, b):
    return SampledSpace((np.array(a, dtype=float), np.array(b, dtype=float)))


def test_weighted_sum_single_component_identity():
    xs = np.array([0.0, 0.3, 0.7])
    ws = weighted_sum_semimetric([(1.0, arc_semimetric())], coordinatewise=False)
    assert np.array_equal(ws.matrix(xs), arc_semimetric().matrix(xs))


def test_weighted_sum_differs_only_in_second_coordinate():
    rho = weighted_sum_semimetric([(0.5, cut_semimetric(interval_labeling([0.5]))),
                                   (0.25, cut_semimetric(interval_labeling([0.5])))])
    space = _pair_space([0.1, 0.1], [0.2, 0.7])
    m = eval_matrix(space, rho).values
    assert m[0, 1] == 0.25
    assert rho.bound == 0.75


def test_weighted_sum_equal_coordinates_is_zero():
    rho = weighted_sum_semimetric([(0.5, arc_semimetric()), (0.25, arc_semimetric())])
    assert eval_matrix(_pair_space([0.3, 0.3], [0.6, 0.6]), rho).values[0, 1] == 0.0


def test_weighted_sum_arity_mismatch():
    rho = weighted_sum_semimetric([(0.5, arc_semimetric())])
    with pytest.raises(RepresentationError):
        eval_matrix(_pair_space([0.1], [0.2]), rho)


@given(st.lists(st.tuples(st.floats(0, 0.999), st.floats(0, 0.999)), min_size=1, max_size=8),
       st.floats(0.01, 3), st.floats(0.01, 3))
def test_weighted_sum_of_semimetrics_is_semimetric(pts, c1, c2):
    a, b = zip(*pts)
    rho = weighted_sum_semimetric([(c1, arc_semimetric()), (c2, cut_semimetric(interval_labeling([0.5])))])
    assert check_semimetric(_pair_space(a, b), rho, tol=1e-9).ok


def test_representation_mismatch_is_an_error():
    words = SampledSpace(np.zeros((3, 4), dtype=np.uint8))
    with pytest.raises(RepresentationError):
        eval_matrix(words, arc_semimetric())
    with pytest.raises(RepresentationError):
        eval_matrix(SampledSpace(np.array([0.1, 0.2])), hamming_semimetric())


def test_hamming_normalized():
    words = np.array([[0, 0, 0, 0], [1, 1, 0, 0]], dtype=np.uint8)
    assert eval_matrix(SampledSpace(words), hamming_semimetric()).values[0, 1] == 0.5
    assert eval_matrix(SampledSpace(words), hamming_semimetric(1)).values[0, 1] == 1.0


def test_check_matrix_flags_constructed_violation():
    d = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    rep = check_matrix(d)
    # 5 > 1 + 1, seen from both ends of the symmetric pair
    assert {(i, k) for i, _, k, _ in rep.triangle} == {(0, 2), (2, 0)}
    assert all(j == 1 and deficit == 3.0 for _, j, _, deficit in rep.triangle)
    assert not rep.symmetry and not rep.diagonal


def test_check_matrix_symmetry_diagonal_bound():
    d = np.array([[0.1, 0.5], [0.4, 0.0]])
    rep = check_matrix(d, bound=0.45)
    assert rep.diagonal == [(0, 0.1)]
    assert len(rep.symmetry) == 1
    assert (0, 1, 0.5) in rep.bound
    assert not rep.ok


def test_weights_normalize_and_reject_bad_input():
    s = SampledSpace(np.array([0.1, 0.2]), np.array([1.0, 3.0]))
    assert s.weights.tolist() == [0.25, 0.75]
    with pytest.raises(ValueError):
        SampledSpace(np.array([0.1, 0.2]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        SampledSpace(np.array([0.1, 0.2]), np.array([1.0]))


def test_project_keeps_weights():
    s = SampledSpace((np.array([0.1, 0.2]), np.zeros((2, 3), dtype=np.uint8)), np.array([1.0, 3.0]))
    assert s.project(1).kind == "word"
    assert s.project(0).weights.tolist() == [0.25, 0.75]


# --- cache ------------------------------------------------------------------


@settings(max_examples=25)
@given(torus_points)
def test_cache_roundtrip_is_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("c") / "m.sdm"
    m = eval_matrix(SampledSpace(np.array(xs)), arc_semimetric())
    write_matrix(path, m)
    back = read_matrix(path, 0.5)
    assert np.array_equal(back.values, m.values)


def test_cache_layout(tmp_path):
    d = np.array([[0, 0.25, 0.5], [0.25, 0, 0.125], [0.5, 0.125, 0]])
    write_matrix(tmp_path / "m.sdm", DistanceMatrix(d))
    raw = (tmp_path / "m.sdm").read_bytes()
    assert raw[:8] == b"SCLTDM\0\0"
    assert struct.unpack("<IIQ", raw[8:24]) == (1, 0, 3)
    assert struct.unpack("<3d", raw[24:]) == (0.25, 0.5, 0.125)


def test_cache_rejects_unknown_version(tmp_path):
    p = tmp_path / "m.sdm"
    write_matrix(p, DistanceMatrix(np.zeros((2, 2))))
    raw = bytearray(p.read_bytes())
    raw[8:12] = struct.pack("<I", 2)
    p.write_bytes(bytes(raw))
    with pytest.raises(CacheFormatError, match="version 2"):
        read_matrix(p)


def test_cache_rejects_truncation_and_garbage(tmp_path):
    p = tmp_path / "m.sdm"
    write_matrix(p, DistanceMatrix(np.zeros((3, 3))))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(CacheFormatError):
        read_matrix(p)
    p.write_bytes(b"hello world, not a matrix")
    with pytest.raises(CacheFormatError):
        read_matrix(p)


def test_matrix_cache_keys_on_provenance_and_semimetric(tmp_path):
    cache = MatrixCache(tmp_path)
    rho = arc_semimetric()
    m = DistanceMatrix(np.array([[0, 0.1], [0.1, 0]]))
    cache.put({"seed": 1}, rho, m)
    assert cache.get({"seed": 2}, rho) is None
    assert cache.get({"seed": 1}, cut_semimetric(interval_labeling([0.5]))) is None
    assert np.array_equal(cache.get({"seed": 1}, rho).values, m.values)
    assert matrix_digest({"a": 1, "b": 2}, {}) == matrix_digest({"b": 2, "a": 1}, {})
