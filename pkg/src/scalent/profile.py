"""Scaling-entropy profiles Phi(n, eps) and the order/equivalence on them."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cover import DEFAULT_ORACLE_LIMIT, EXACT, GREEDY, estimate_entropy
from .dynamics import ProductSystem, SystemSpec, averaged_matrix_stream, sample_space
from .mm_space import MatrixCache, SampledSpace, Semimetric

CSV_HEADER = ["n", "epsilon", "H_bits", "k", "estimator", "N", "seed"]

INSTABILITY_CAVEAT = (
    "heuristic proxy: instability is an asymptotic statement over all epsilon; "
    "a flag computed on a finite grid is a heuristic and decides nothing"
)


@dataclass(eq=False)
class ProfileGrid:
    """Phi[i, j] = entropy (bits) at n_grid[i], eps_grid[j]."""

    n_grid: tuple
    eps_grid: tuple
    values: np.ndarray
    estimator: str = EXACT
    provenance: dict = field(default_factory=dict)
    k: np.ndarray | None = None

    def __post_init__(self):
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.eps_grid = tuple(float(e) for e in self.eps_grid)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.n_grid), len(self.eps_grid)):
            raise ValueError(f"values shape {self.values.shape} does not match the grids")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])) or self.n_grid[0] < 1:
            raise ValueError("n grid must be strictly increasing positive integers")
        if any(b >= a for a, b in zip(self.eps_grid, self.eps_grid[1:])) or self.eps_grid[-1] <= 0:
            raise ValueError("epsilon grid must be strictly decreasing and positive")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("profile values must be finite and nonnegative")
        if self.k is not None:
            self.k = np.asarray(self.k, dtype=np.int64)

    def eps_index(self, eps: float) -> int:
        for j, e in enumerate(self.eps_grid):
            if e == eps or math.isclose(e, eps, rel_tol=1e-12, abs_tol=0.0):
                return j
        raise KeyError(f"epsilon {eps!r} not in grid {self.eps_grid}")

    def value(self, n: int, eps: float) -> float:
        return float(self.values[self.n_grid.index(n), self.eps_index(eps)])

    def row(self, eps: float) -> np.ndarray:
        """Phi(., eps) along the n grid."""
        return self.values[:, self.eps_index(eps)]

    def scaled(self, c: float) -> "ProfileGrid":
        return ProfileGrid(self.n_grid, self.eps_grid, self.values * c, "scaled", dict(self.provenance, scale=c))

    # --- serialization ------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        N = self.provenance.get("N", "")
        seed = self.provenance.get("seed", "")
        for i, n in enumerate(self.n_grid):
            for j, e in enumerate(self.eps_grid):
                k = "" if self.k is None else int(self.k[i, j])
                w.writerow([n, repr(e), repr(float(self.values[i, j])), k, self.estimator,
                            "" if N is None else N, "" if seed is None else seed])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "n_grid": list(self.n_grid),
            "eps_grid": list(self.eps_grid),
            "estimator": self.estimator,
            "H_bits": self.values.tolist(),
            "k": None if self.k is None else self.k.tolist(),
            "provenance": self.provenance,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ProfileGrid":
        doc = json.loads(text)
        return cls(doc["n_grid"], doc["eps_grid"], np.array(doc["H_bits"], dtype=np.float64),
                   doc.get("estimator", EXACT), doc.get("provenance", {}), doc.get("k"))

    @classmethod
    def from_csv(cls, text: str) -> "ProfileGrid":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or list(rows[0].keys()) != CSV_HEADER:
            raise ValueError(f"profile CSV must have header {','.join(CSV_HEADER)}")
        n_grid = sorted({int(r["n"]) for r in rows})
        eps_grid = sorted({float(r["epsilon"]) for r in rows}, reverse=True)
        vals = np.full((len(n_grid), len(eps_grid)), np.nan)
        ks = np.zeros_like(vals, dtype=np.int64)
        has_k = True
        for r in rows:
            i, j = n_grid.index(int(r["n"])), eps_grid.index(float(r["epsilon"]))
            vals[i, j] = float(r["H_bits"])
            if r["k"] == "":
                has_k = False
            else:
                ks[i, j] = int(r["k"])
        if np.isnan(vals).any():
            raise ValueError("profile CSV does not cover the full n x epsilon grid")
        prov = {"N": int(rows[0]["N"]) if rows[0]["N"] else None,
                "seed": int(rows[0]["seed"]) if rows[0]["seed"] else None}
        return cls(n_grid, eps_grid, vals, rows[0]["estimator"], prov, ks if has_k else None)

    @classmethod
    def load(cls, path) -> "ProfileGrid":
        path = Path(path)
        text = path.read_text()
        return cls.from_csv(text) if path.suffix.lower() == ".csv" else cls.from_json(text)


def _entropy_row(args):
    d, w, eps_grid, estimator, limit = args
    return [estimate_entropy(d, w, e, estimator, limit).k for e in eps_grid]


def compute_profile(system: SystemSpec, rho: Semimetric, n_grid: Sequence[int], eps_grid: Sequence[float],
                    N: int | None = None, seed: int = 0, estimator: str = EXACT, enumerate: bool = False,
                    oracle_limit: int = DEFAULT_ORACLE_LIMIT, workers: int = 1,
                    cache: MatrixCache | None = None, space: SampledSpace | None = None) -> ProfileGrid:
    """Phi(n, eps) = H_eps of the n-averaged semimetric on a sample of ``system``.

    Rows (one n, every epsilon) are independent; with ``workers > 1`` they
    are evaluated in a process pool and reassembled in grid order, so results
    do not change.
    """
    if estimator not in (EXACT, GREEDY):
        raise ValueError(f"unknown estimator {estimator!r}")
    if space is None:
        space = sample_space(system, N, seed, enumerate=enumerate)
    T = system.transformation()
    n_grid = sorted(int(n) for n in n_grid)
    eps_grid = [float(e) for e in eps_grid]
    # validate grids up front, before any heavy work
    ProfileGrid(n_grid, eps_grid, np.zeros((len(n_grid), len(eps_grid))))

    w = space.weights
    stream = averaged_matrix_stream(space, rho, T, n_grid, cache=cache)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_entropy_row, (dm.values, w, eps_grid, estimator, oracle_limit))
                       for _, dm in stream]
            ks = [f.result() for f in futures]
    else:
        # evaluate as the stream goes so only one matrix is alive at a time
        ks = [_entropy_row((dm.values, w, eps_grid, estimator, oracle_limit)) for _, dm in stream]
    k = np.array(ks, dtype=np.int64).reshape(len(n_grid), len(eps_grid))

    prov = dict(space.provenance) if isinstance(space.provenance, dict) else {"space": space.provenance}
    prov.update(semimetric=rho.spec, estimator=estimator, oracle_limit=oracle_limit)
    return ProfileGrid(n_grid, eps_grid, np.log2(k), estimator, prov, k)


# --- order and equivalence ---------------------------------------------------


@dataclass
class ComparisonWitness:
    """For each left epsilon: the chosen right delta and constant C."""

    holds: bool
    C_max: float
    choices: list  # dicts {epsilon, delta, C} (delta None where refused)

    @property
    def C(self) -> float:
        cs = [c["C"] for c in self.choices if c["C"] is not None]
        return max(cs) if cs else 0.0

    def to_dict(self) -> dict:
        return {"holds": self.holds, "C_max": self.C_max, "C": self.C, "choices": self.choices}


def _needed_constant(phi: np.ndarray, psi: np.ndarray) -> float:
    """Least C with phi <= C * psi entrywise; 0/0 passes, x/0 is infinite."""
    c = 0.0
    for a, b in zip(phi, psi):
        if a == 0:
            continue
        if b == 0:
            return math.inf
        c = max(c, a / b)
    return c


def preceq_check(left: ProfileGrid, right: ProfileGrid, C_max: float = 16.0) -> ComparisonWitness:
    """Decide left <= right on the grids: every eps needs a delta and C <= C_max.

    Deltas are scanned from the largest down; the first that works is kept
    together with its least constant.
    """
    if left.n_grid != right.n_grid:
        raise ValueError("profiles must share the n grid")
    choices = []
    holds = True
    for j, e in enumerate(left.eps_grid):
        phi = left.values[:, j]
        pick = None
        for jj, dlt in enumerate(right.eps_grid):
            c = _needed_constant(phi, right.values[:, jj])
            if c <= C_max:
                pick = {"epsilon": e, "delta": dlt, "C": c}
                break
        if pick is None:
            holds = False
            pick = {"epsilon": e, "delta": None, "C": None}
        choices.append(pick)
    return ComparisonWitness(holds, float(C_max), choices)


def equivalent(left: ProfileGrid, right: ProfileGrid, C_max: float = 16.0) -> bool:
    return preceq_check(left, right, C_max).holds and preceq_check(right, left, C_max).holds


# --- stability ---------------------------------------------------------------


def stability_diagnostic(grid: ProfileGrid, ratio_cap: float = 2.0, growth_cap: float = 2.0,
                         tail_from: int | None = None) -> dict:
    """Compare epsilon rows of a profile for diverging growth in n.

    For each pair (eps > delta): band = max_n Phi(n, delta) / max(Phi(n, eps), 1)
    and the excess r(n) = Phi(n, delta) / max(Phi(n, eps), 1) along the tail of
    the n grid. The pair is flagged when band > ratio_cap, r is nondecreasing
    on the tail, and r grows by at least ``growth_cap`` across the tail, i.e.
    the two rows' growth ratios Phi(n_last)/Phi(n_tail) differ by that factor.
    """
    if len(grid.eps_grid) < 2:
        raise ValueError("need at least two epsilon rows")
    ns = np.array(grid.n_grid)
    if tail_from is None:
        tail_from = int(ns[(len(ns) - 1) // 2])
    tail = ns >= tail_from
    if tail.sum() < 2:
        raise ValueError("the tail of the n grid needs at least two points")
    floor = lambda v: np.maximum(v, 1.0)  # noqa: E731

    pairs = []
    flagged = False
    for a in range(len(grid.eps_grid)):
        for b in range(a + 1, len(grid.eps_grid)):
            hi, lo = grid.values[:, a], grid.values[:, b]
            r = lo / floor(hi)
            band = float(r.max())
            rt = r[tail]
            growth = float(rt[-1] / rt[0]) if rt[0] > 0 else (math.inf if rt[-1] > 0 else 1.0)
            monotone = bool(np.all(np.diff(rt) >= 0))
            flag = band > ratio_cap and monotone and growth >= growth_cap
            flagged |= flag
            pairs.append({"epsilon": grid.eps_grid[a], "delta": grid.eps_grid[b], "band": band,
                          "tail_growth": growth, "tail_monotone": monotone, "flagged": flag})
    rows = []
    for j, e in enumerate(grid.eps_grid):
        v = grid.values[tail, j]
        rows.append({"epsilon": e, "growth_ratio": float(floor(v[-1]) / floor(v[0]))})
    g = [r["growth_ratio"] for r in rows]
    return {
        "verdict": "unstable at desk scale" if flagged else "no instability detected",
        "flagged": flagged,
        "caveat": INSTABILITY_CAVEAT,
        "ratio_cap": ratio_cap,
        "growth_cap": growth_cap,
        "tail_n": [int(n) for n in ns[tail]],
        "rows": rows,
        "growth_divergence": g[-1] / g[0],
        "pairs": pairs,
    }


# --- product and factor bounds ------------------------------------------------


def budget_terms(epsilon: float) -> tuple[int, float]:
    """R(eps) = ceil(-log2 eps) and the per-component budget eps / (2 R)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    R = max(0, math.ceil(-math.log2(epsilon)))
    return R, (epsilon / (2 * R) if R else math.inf)


def _semimetric_components(spec: dict):
    if spec.get("kind") != "weighted-sum" or not spec.get("coordinatewise", False):
        raise ValueError("product grid must use a coordinatewise weighted-sum semimetric")
    return spec["components"]


def product_bound_check(component_grids: Sequence[ProfileGrid], product_grid: ProfileGrid, epsilon: float) -> dict:
    """Check Phi_prod(n, eps) <= sum_{m <= R} Phi_m(n, eps / (2R)) on the n grid."""
    grids = [product_grid, *component_grids]
    if any(g.estimator != EXACT for g in grids):
        raise ValueError("the product bound is only checked with the exact estimator")
    prov = product_grid.provenance
    sys = prov.get("system", {})
    if sys.get("kind") != "product" or len(sys["components"]) != len(component_grids):
        raise ValueError("product grid provenance does not match the component grids")
    if not prov.get("enumerate"):
        raise ValueError("the product bound needs an enumerated product space")
    comps = _semimetric_components(prov.get("semimetric", {}))
    for m, (g, c) in enumerate(zip(component_grids, comps), start=1):
        if g.provenance.get("system") != sys["components"][m - 1]:
            raise ValueError(f"component grid {m} is for a different system")
        if g.provenance.get("semimetric") != c["semimetric"]:
            raise ValueError(f"component grid {m} uses a different semimetric")
        if c["weight"] != 2.0 ** -m:
            raise ValueError(f"component {m} has weight {c['weight']}, expected 2^-{m}")
        if g.n_grid != product_grid.n_grid:
            raise ValueError("component and product grids must share the n grid")

    R, budget = budget_terms(epsilon)
    used = component_grids[: min(R, len(component_grids))]
    rows = []
    for n in product_grid.n_grid:
        lhs = product_grid.value(n, epsilon)
        rhs = math.fsum(g.value(n, budget) for g in used)
        rows.append({"n": n, "lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "ok": lhs <= rhs + 1e-12})
    return {"check": "product_bound", "epsilon": epsilon, "R": R, "budget": budget,
            "components_used": len(used), "rows": rows, "ok": all(r["ok"] for r in rows)}


def product_bound_grids(system: ProductSystem, components: Sequence[Semimetric], n_grid: Sequence[int],
                        epsilon: float, oracle_limit: int = 64):
    """Exact component and product grids aligned for :func:`product_bound_check`."""
    from .mm_space import weighted_sum_semimetric

    R, budget = budget_terms(epsilon)
    rho = weighted_sum_semimetric([(2.0 ** -(m + 1), c) for m, c in enumerate(components)])
    prod = compute_profile(system, rho, n_grid, [epsilon], enumerate=True, oracle_limit=oracle_limit)
    comp_eps = [budget] if R else [1.0]
    comps = [compute_profile(s, c, n_grid, comp_eps, enumerate=True, oracle_limit=oracle_limit)
             for s, c in zip(system.components, components)]
    return comps, prod


def factor_bound_check(factor_grid: ProfileGrid, system_grid: ProfileGrid, C_max: float = 16.0) -> dict:
    """Factor profiles must sit below the system profile in the grid order."""
    w = preceq_check(factor_grid, system_grid, C_max)
    return {"check": "factor_bound", "ok": w.holds, "witness": w.to_dict()}


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
