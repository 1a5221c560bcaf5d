import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalent.cover import exact_entropy
from scalent.dynamics import BernoulliShift, CyclicRotation, ProductSystem, averaged_semimetric, sample_space
from scalent.mm_space import (
    MatrixCache,
    arc_semimetric,
    cut_semimetric,
    eval_matrix,
    interval_labeling,
    symbol_labeling,
    weighted_sum_semimetric,
    zero_semimetric,
)
from scalent.profile import (
    CSV_HEADER,
    INSTABILITY_CAVEAT,
    ProfileGrid,
    budget_terms,
    compute_profile,
    equivalent,
    factor_bound_check,
    preceq_check,
    product_bound_check,
    product_bound_grids,
    stability_diagnostic,
)

HALF_CUT = cut_semimetric(interval_labeling([0.5]))
FIRST = cut_semimetric(symbol_labeling(0))


def grid_of(values, n_grid=None, eps_grid=None):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    n_grid = n_grid or list(range(1, v.shape[0] + 1))
    eps_grid = eps_grid or [0.5 / (j + 1) for j in range(v.shape[1])]
    return ProfileGrid(n_grid, eps_grid, v)


# --- compute_profile ----------------------------------------------------------


def test_invariant_metric_gives_constant_rows():
    g = compute_profile(CyclicRotation(4), arc_semimetric(), [1, 2, 3, 8], [0.3, 0.2, 0.1], enumerate=True)
    assert np.all(g.values == g.values[0])


def test_zero_semimetric_gives_zero_grid():
    g = compute_profile(CyclicRotation(5), zero_semimetric(), [1, 4], [0.5, 0.01], enumerate=True)
    assert not g.values.any()


def test_bernoulli_enumerated_cell():
    g = compute_profile(BernoulliShift(2, None, 8), FIRST, [4], [0.1], enumerate=True, oracle_limit=16)
    assert g.value(4, 0.1) == math.log2(15)
    assert g.k.tolist() == [[15]]


def test_profile_matches_direct_entropy():
    sys = BernoulliShift(2, (0.3, 0.7), 4)
    space = sample_space(sys, enumerate=True)
    g = compute_profile(sys, FIRST, [1, 2, 4], [0.3, 0.1], enumerate=True, oracle_limit=16)
    T = sys.transformation()
    for n in (1, 2, 4):
        d = eval_matrix(space, averaged_semimetric(FIRST, T, n)).values
        for e in (0.3, 0.1):
            assert g.value(n, e) == exact_entropy(d, space.weights, e, 16).H


def test_exact_profile_monotone_in_eps():
    g = compute_profile(CyclicRotation(7), HALF_CUT, [1, 2, 3, 5], [0.4, 0.2, 0.1, 0.05], enumerate=True)
    assert np.all(np.diff(g.values, axis=1) >= 0)


def test_workers_and_cache_do_not_change_results(tmp_path):
    args = (BernoulliShift(2, None, 8), FIRST, [1, 2, 4, 8], [0.3, 0.1])
    kw = dict(N=300, seed=11, estimator="greedy")
    a = compute_profile(*args, **kw)
    b = compute_profile(*args, **kw, workers=2)
    c = compute_profile(*args, **kw, cache=MatrixCache(tmp_path))
    d = compute_profile(*args, **kw, cache=MatrixCache(tmp_path))
    assert a.to_csv() == b.to_csv() == c.to_csv() == d.to_csv()
    assert a.to_json() == d.to_json()


def test_bad_grids_are_rejected():
    with pytest.raises(ValueError):
        compute_profile(CyclicRotation(4), HALF_CUT, [1], [0.1, 0.2], enumerate=True)
    with pytest.raises(ValueError):
        compute_profile(CyclicRotation(4), HALF_CUT, [1], [0.1], estimator="magic", enumerate=True)


# --- serialization ----------------------------------------------------------------


def test_csv_schema_and_roundtrip():
    g = compute_profile(CyclicRotation(5), HALF_CUT, [1, 2], [0.3, 0.1], N=40, seed=2, estimator="greedy")
    text = g.to_csv()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert text.splitlines()[1].endswith(",greedy,40,2")
    back = ProfileGrid.from_csv(text)
    assert np.array_equal(back.values, g.values) and back.eps_grid == g.eps_grid


def test_json_roundtrip_keeps_provenance():
    g = compute_profile(CyclicRotation(5), HALF_CUT, [1, 2], [0.3], enumerate=True)
    back = ProfileGrid.from_json(g.to_json())
    assert back.provenance == json.loads(g.to_json())["provenance"]
    assert back.provenance["system"] == {"kind": "cyclic_rotation", "q": 5, "p": 1}
    assert np.array_equal(back.values, g.values)


# --- order and equivalence --------------------------------------------------------


def test_self_comparison():
    g = grid_of([[1, 2], [2, 3], [3, 5]])
    w = preceq_check(g, g, C_max=1)
    assert w.holds and w.C == 1.0
    assert all(c["delta"] == c["epsilon"] for c in w.choices)


def test_log_below_linear_but_not_conversely():
    ns = list(range(2, 1025))
    log = grid_of([math.ceil(math.log2(n)) for n in ns], ns)
    lin = grid_of([float(n) for n in ns], ns)
    assert preceq_check(log, lin, C_max=8).holds
    w = preceq_check(lin, log, C_max=8)
    assert not w.holds and w.choices[0]["delta"] is None


@given(st.floats(1, 8))
def test_rescaled_copy_is_equivalent(c):
    g = grid_of([[1, 0], [2, 1], [4, 3]])
    assert equivalent(g.scaled(c), g, C_max=c * (1 + 1e-12))


def test_zero_conventions():
    zero = grid_of([0.0, 0.0])
    pos = grid_of([1.0, 0.0])
    assert preceq_check(zero, zero, 1).holds
    assert preceq_check(zero, pos, 1).holds
    assert not preceq_check(pos, zero, 1e9).holds


def test_smaller_delta_rescues_comparison():
    left = grid_of([[4.0], [8.0]])
    right = grid_of([[1.0, 4.0], [1.0, 8.0]])
    w = preceq_check(left, right, C_max=2)
    assert w.holds and w.choices[0]["delta"] == right.eps_grid[1]


def test_grid_mismatch_is_an_error():
    with pytest.raises(ValueError):
        preceq_check(grid_of([1, 2]), grid_of([1, 2, 3]))


def test_factor_bound():
    sys = ProductSystem((CyclicRotation(4), BernoulliShift(2, None, 3)))
    rho = weighted_sum_semimetric([(0.5, HALF_CUT), (0.25, FIRST)])
    full = compute_profile(sys, rho, [1, 2, 3], [0.3, 0.2, 0.1], enumerate=True, oracle_limit=32)
    factor = compute_profile(CyclicRotation(4), HALF_CUT, [1, 2, 3], [0.3, 0.2, 0.1], enumerate=True)
    assert factor_bound_check(factor, full)["ok"]


# --- stability ---------------------------------------------------------------------


def test_constant_in_eps_grid_is_stable():
    ns = [1, 2, 4, 8, 16]
    row = [1.0, 2.0, 3.0, 4.0, 5.0]
    d = stability_diagnostic(grid_of(np.array([row, row, row]).T, ns))
    assert not d["flagged"] and d["verdict"] == "no instability detected"
    assert d["caveat"] == INSTABILITY_CAVEAT


def test_constructed_divergence_is_flagged():
    ns = [1, 2, 4, 8, 16]
    d = stability_diagnostic(grid_of(np.array([[1.0] * 5, [float(n) for n in ns]]).T, ns))
    assert d["flagged"] and d["verdict"] == "unstable at desk scale"
    assert d["growth_divergence"] == 4.0  # Phi(16)/Phi(4) = 4 in the delta row, 1 in the eps row


def test_parallel_linear_rows_are_not_flagged():
    ns = [1, 2, 4, 8, 16]
    d = stability_diagnostic(grid_of(np.array([[float(n) for n in ns], [3.0 * n for n in ns]]).T, ns))
    assert not d["flagged"]


def test_stability_needs_two_rows():
    with pytest.raises(ValueError):
        stability_diagnostic(grid_of([1, 2, 3]))


# --- product bound -------------------------------------------------------------------


def test_budget_terms():
    assert budget_terms(0.5) == (1, 0.25)
    assert budget_terms(0.25) == (2, 0.0625)
    assert budget_terms(0.3) == (2, 0.075)


def test_product_bound_rotation_bernoulli_quarter():
    sys = ProductSystem((CyclicRotation(4), BernoulliShift(2, None, 4)))
    comps, prod = product_bound_grids(sys, [HALF_CUT, FIRST], [1, 2, 3, 4], 0.25)
    rep = product_bound_check(comps, prod, 0.25)
    assert rep["R"] == 2 and rep["ok"]
    assert [r["n"] for r in rep["rows"]] == [1, 2, 3, 4]


def test_product_bound_half_uses_first_component_only():
    sys = ProductSystem((CyclicRotation(4), BernoulliShift(2, None, 4)))
    comps, prod = product_bound_grids(sys, [HALF_CUT, FIRST], [1, 2, 3, 4], 0.5)
    rep = product_bound_check(comps, prod, 0.5)
    assert rep["R"] == 1 and rep["components_used"] == 1 and rep["ok"]
    for row in rep["rows"]:
        assert row["rhs"] == comps[0].value(row["n"], 0.25)


def test_half_rescaling_only_shrinks_entropy():
    # one coordinate at weight 1/2: H_eps(rho / 2) <= H_{eps / (2R)}(rho)
    sys = CyclicRotation(7)
    half = compute_profile(sys, weighted_sum_semimetric([(0.5, HALF_CUT)], coordinatewise=False),
                           [1, 2, 4], [0.25], enumerate=True)
    full = compute_profile(sys, HALF_CUT, [1, 2, 4], [0.0625], enumerate=True)
    assert np.all(half.values[:, 0] <= full.values[:, 0])


def test_product_bound_refuses_greedy_and_misaligned_inputs():
    sys = ProductSystem((CyclicRotation(4), BernoulliShift(2, None, 3)))
    comps, prod = product_bound_grids(sys, [HALF_CUT, FIRST], [1, 2], 0.25)
    greedy = ProfileGrid(prod.n_grid, prod.eps_grid, prod.values, "greedy", prod.provenance)
    with pytest.raises(ValueError, match="exact"):
        product_bound_check(comps, greedy, 0.25)
    with pytest.raises(ValueError):
        product_bound_check(comps[::-1], prod, 0.25)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([0.5, 0.4, 0.3, 0.25]), st.integers(2, 5))
def test_product_bound_holds_on_small_products(eps, q):
    sys = ProductSystem((CyclicRotation(q), BernoulliShift(2, None, 3)))
    comps, prod = product_bound_grids(sys, [HALF_CUT, FIRST], [1, 2, 3], eps)
    assert product_bound_check(comps, prod, eps)["ok"]
