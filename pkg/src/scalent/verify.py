"""Randomized and sweep suites that drive the inequality verifiers."""

from __future__ import annotations

import itertools

import numpy as np

from .dynamics import BernoulliShift, CyclicRotation, ProductSystem, TorusRotation, rng_for, sample_space
from .mm_space import (
    arc_semimetric,
    cut_semimetric,
    interval_labeling,
    symbol_labeling,
    weighted_sum_semimetric,
)
from .profile import product_bound_check, product_bound_grids
from .subadd import (
    CheckRecord,
    check_conditions,
    instance_digest,
    is_subadditive,
    subadditive_hull,
    verify_lm_pz,
    verify_prop1,
)

SUITES = ("lm_pz", "prop1", "lmex", "hull", "all")

LM_PZ_EPS = (0.2, 0.1, 0.05)
PROP1_EPS = (0.1, 0.05)
LMEX_EPS = (0.5, 0.25)
HULL_RTOL = 1e-12


def random_bounded_semimetric(rng: np.random.Generator, arity: int):
    """Positive mix of arc and random-cut semimetrics over product coordinates, bounded by 1."""
    parts = []
    for _ in range(arity):
        if rng.random() < 0.5:
            parts.append(arc_semimetric())
        else:
            cuts = np.sort(rng.uniform(0.05, 0.95, size=int(rng.integers(1, 4))))
            cuts = np.unique(np.round(cuts, 6))
            parts.append(cut_semimetric(interval_labeling(cuts.tolist())))
    raw = rng.uniform(0.1, 1.0, size=arity)
    scale = sum(u * p.bound for u, p in zip(raw, parts))
    return weighted_sum_semimetric([(float(u / (scale * (1 + 1e-9))), p) for u, p in zip(raw, parts)])


def lm_pz_suite(seed: int, budget: int = 100, oracle_limit: int = 15) -> list[CheckRecord]:
    records = []
    arity = 3
    system = ProductSystem(tuple(TorusRotation() for _ in range(arity)))
    for i in range(budget):
        rng = rng_for(seed, 1, i)
        N = int(rng.integers(2, 13))
        k = int(rng.integers(1, 5))
        space = sample_space(system, N, seed=int(rng.integers(0, 2**63)))
        rhos = [random_bounded_semimetric(rng, arity) for _ in range(k)]
        for eps in LM_PZ_EPS:
            tag = instance_digest({"suite": "lm_pz", "seed": seed, "i": i, "eps": eps})
            records += verify_lm_pz(space, rhos, eps, oracle_limit, instance=tag)
    return records


def prop1_instances():
    systems = [
        (CyclicRotation(5), cut_semimetric(interval_labeling([0.5]))),
        (CyclicRotation(7), cut_semimetric(interval_labeling([0.5]))),
        (BernoulliShift(2, None, 4, True), cut_semimetric(symbol_labeling(0))),
    ]
    for (system, rho), k, n, eps in itertools.product(systems, (1, 2, 3), (2, 3, 4, 6), PROP1_EPS):
        if k * n <= 12:
            yield system, rho, k, n, eps


def prop1_suite(seed: int = 0, budget: int | None = None, oracle_limit: int = 32) -> list[CheckRecord]:
    records = []
    for system, rho, k, n, eps in itertools.islice(prop1_instances(), budget):
        records += verify_prop1(system, rho, k, n, eps, oracle_limit)
    return records


def lmex_suite(seed: int = 0, budget: int | None = None, oracle_limit: int = 64) -> list[CheckRecord]:
    system = ProductSystem((CyclicRotation(4), BernoulliShift(2, None, 3, True)))
    comps = [cut_semimetric(interval_labeling([0.5])), cut_semimetric(symbol_labeling(0))]
    records = []
    for eps in itertools.islice(LMEX_EPS, budget):
        grids, prod = product_bound_grids(system, comps, [1, 2, 3, 4], eps, oracle_limit)
        rep = product_bound_check(grids, prod, eps)
        for row in rep["rows"]:
            tag = instance_digest({"suite": "lmex", "eps": eps, "n": row["n"]})
            records.append(CheckRecord("lmex.product_bound", tag, row["margin"],
                                       detail={"epsilon": eps, "n": row["n"], "R": rep["R"],
                                               "lhs": row["lhs"], "rhs": row["rhs"]}))
    return records


def random_triple(rng: np.random.Generator, N: int = 64):
    """eta, phi, psi satisfying both hull hypotheses by construction.

    psi has nonincreasing positive increments, so psi(kn) <= k psi(n);
    phi = psi * u with u in [1/2, 1]; eta = v * (suffix minimum of phi).
    """
    inc = np.sort(rng.uniform(0.0, 1.0, size=N))[::-1]
    inc[0] = max(inc[0], 1e-3)
    psi = np.cumsum(inc)
    phi = psi * rng.uniform(0.5, 1.0, size=N)
    eta = np.minimum.accumulate(phi[::-1])[::-1] * rng.uniform(0.0, 1.0)
    return eta, phi, psi


def hull_suite(seed: int, budget: int = 500, N: int = 64) -> list[CheckRecord]:
    records = []
    half = N // 2
    for i in range(budget):
        rng = rng_for(seed, 4, i)
        eta, phi, psi = random_triple(rng, N)
        check_conditions(eta, phi, psi)
        hull = subadditive_hull(eta, phi, psi)
        th = hull.theta
        margins = {
            "monotone": float(np.min(np.diff(th))),
            "lower": float(np.min(th - eta)),
            "upper": float(np.min(2 * psi[:half] - th[:half])),
        }
        # theta is monotone and subadditive in exact arithmetic; floats drift by ulps
        tol = HULL_RTOL * max(1.0, float(np.max(np.abs(th))))
        sub_ok = is_subadditive(th, tol)
        tag = instance_digest({"suite": "hull", "seed": seed, "i": i})
        margin = min(margins.values()) if sub_ok else -1.0
        records.append(CheckRecord("hull.sandwich", tag, margin,
                                   boundary_flag=any(v["horizon"] for v in hull.violations),
                                   detail={"subadditive": sub_ok, **margins}, tolerance=tol))
    return records


def run_suite(name: str, seed: int = 0, budget: int | None = None, oracle_limit: int | None = None) -> list[CheckRecord]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    kw = {} if oracle_limit is None else {"oracle_limit": oracle_limit}
    if name == "lm_pz":
        return lm_pz_suite(seed, 100 if budget is None else budget, **kw)
    if name == "prop1":
        return prop1_suite(seed, budget, **kw)
    if name == "lmex":
        return lmex_suite(seed, budget, **kw)
    if name == "hull":
        return hull_suite(seed, 500 if budget is None else budget)
    out = []
    for sub in SUITES[:-1]:
        out += run_suite(sub, seed, budget, oracle_limit)
    return out


def summarize(records: list[CheckRecord]) -> dict:
    checked = [r for r in records if not r.skipped]
    return {
        "records": len(records),
        "checked": len(checked),
        "skipped": len(records) - len(checked),
        "violations": sum(r.violated for r in records),
        "min_margin": min((r.margin for r in checked), default=None),
    }
