"""Subadditive regularization of entropy sequences and inequality verifiers.

Sequences are 1-indexed in the maths and stored as numpy arrays with
``seq[n - 1]`` holding the value at n. Every sup/inf over an unbounded index
set is truncated at the horizon N_max = len(seq); the per-index
``*_boundary`` flags say whether the extremum sat at that horizon.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cover import exact_entropy
from .dynamics import SystemSpec, averaged_semimetric, sample_space, shifted_semimetric
from .mm_space import DistanceMatrix, SampledSpace, Semimetric, as_array, eval_matrix
from .profile import ProfileGrid


class ConditionViolation(ValueError):
    """A hypothesis of the hull construction fails at some index."""

    def __init__(self, condition: str, index: tuple, message: str):
        super().__init__(message)
        self.condition = condition
        self.index = index


def _seq(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("expected a nonempty 1-d sequence")
    return a


def lower_monotone_envelope(phi) -> np.ndarray:
    """phi_hat(n) = min over n <= m <= N_max of phi(m)."""
    phi = _seq(phi)
    return np.minimum.accumulate(phi[::-1])[::-1].copy()


def theta_hat(phi_hat, return_boundary: bool = False):
    """theta_hat(n) = max over k >= 1 with kn <= N_max of phi_hat(kn) / k."""
    ph = _seq(phi_hat)
    N = len(ph)
    out = np.empty(N)
    boundary = np.zeros(N, dtype=bool)
    for n in range(1, N + 1):
        ks = np.arange(1, N // n + 1)
        vals = ph[ks * n - 1] / ks
        best = int(np.argmax(vals))
        out[n - 1] = vals[best]
        # the sup could have continued past the horizon
        boundary[n - 1] = best == len(ks) - 1 and len(ks) > 1
    return (out, boundary) if return_boundary else out


def theta(theta_hat_seq, return_boundary: bool = False):
    """theta(n) = n * max over n <= m <= N_max of theta_hat(m) / m."""
    th = _seq(theta_hat_seq)
    N = len(th)
    m = np.arange(1, N + 1)
    ratio = th / m
    tail_max = np.maximum.accumulate(ratio[::-1])[::-1]
    out = m * tail_max
    boundary = np.zeros(N, dtype=bool)
    for n in range(1, N + 1):
        boundary[n - 1] = n < N and ratio[N - 1] == tail_max[n - 1]
    return (out, boundary) if return_boundary else out


@dataclass
class HullResult:
    phi_hat: np.ndarray
    theta_hat: np.ndarray
    theta: np.ndarray
    theta_hat_boundary: np.ndarray
    theta_boundary: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def N_max(self) -> int:
        return len(self.theta)

    @property
    def horizon_note(self) -> str:
        return (f"sups truncated at N_max={self.N_max}; the upper sandwich is only guaranteed "
                f"for n <= {self.N_max // 2}")

    def to_dict(self) -> dict:
        return {
            "N_max": self.N_max,
            "phi_hat": self.phi_hat.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "theta": self.theta.tolist(),
            "theta_hat_boundary": self.theta_hat_boundary.tolist(),
            "theta_boundary": self.theta_boundary.tolist(),
            "horizon_note": self.horizon_note,
            "violations": self.violations,
        }


def check_conditions(eta, phi, psi, tol: float = 0.0):
    """Raise :class:`ConditionViolation` at the first index breaking eq1 or eq2.

    eq1: phi(kn) <= k psi(n) for kn <= N_max; eq2: phi(n) >= eta(k) for k <= n.
    """
    eta, phi, psi = _seq(eta), _seq(phi), _seq(psi)
    N = len(phi)
    if len(eta) != N or len(psi) != N:
        raise ValueError("eta, phi and psi must have the same length")
    if min(eta.min(), phi.min(), psi.min()) < 0:
        raise ValueError("sequences must be nonnegative")
    for n in range(1, N + 1):
        for k in range(1, N // n + 1):
            if phi[k * n - 1] > k * psi[n - 1] + tol:
                raise ConditionViolation("eq1", (k, n), f"phi({k * n}) > {k} * psi({n})")
    prefix_max_eta = np.maximum.accumulate(eta)
    for n in range(1, N + 1):
        if phi[n - 1] < prefix_max_eta[n - 1] - tol:
            k = int(np.argmax(eta[:n])) + 1
            raise ConditionViolation("eq2", (k, n), f"phi({n}) < eta({k})")


def subadditive_hull(eta, phi, psi, check: bool = True) -> HullResult:
    """Nondecreasing subadditive theta with eta <= theta <= 2 psi.

    The sandwich is checked pointwise; failures at n > N_max / 2 are tagged
    as horizon effects, anything below that is a genuine violation.
    """
    eta, phi, psi = _seq(eta), _seq(phi), _seq(psi)
    if check:
        check_conditions(eta, phi, psi)
    ph = lower_monotone_envelope(phi)
    th_hat, b_hat = theta_hat(ph, return_boundary=True)
    th, b = theta(th_hat, return_boundary=True)
    N = len(th)
    violations = []
    for n in range(1, N + 1):
        lo_ok = eta[n - 1] <= th[n - 1]
        hi_ok = th[n - 1] <= 2 * psi[n - 1]
        if not (lo_ok and hi_ok):
            violations.append({"n": n, "bound": "lower" if not lo_ok else "upper",
                               "horizon": n > N // 2 or bool(b[n - 1] or b_hat[n - 1])})
    return HullResult(ph, th_hat, th, b_hat, b, violations)


def is_subadditive(seq, tol: float = 0.0) -> bool:
    s = _seq(seq)
    N = len(s)
    for a in range(1, N):
        for b in range(a, N - a + 1):
            if s[a + b - 1] > s[a - 1] + s[b - 1] + tol:
                return False
    return True


def monotone_eps_envelope(grid: ProfileGrid) -> ProfileGrid:
    """Running max over decreasing epsilon: Phi(n, eps_i) = max_{j <= i} Theta(n, eps_j)."""
    vals = np.maximum.accumulate(grid.values, axis=1)
    prov = dict(grid.provenance, envelope_of=grid.estimator)
    return ProfileGrid(grid.n_grid, grid.eps_grid, vals, "envelope", prov)


# --- verifiers ----------------------------------------------------------------


@dataclass
class CheckRecord:
    check: str
    instance: str
    margin: float | None
    skipped: bool = False
    boundary_flag: bool = False
    detail: dict = field(default_factory=dict)
    tolerance: float = 0.0

    @property
    def violated(self) -> bool:
        return not self.skipped and self.margin is not None and self.margin < -self.tolerance

    def to_dict(self) -> dict:
        return {"check": self.check, "instance": self.instance, "margin": self.margin,
                "skipped": self.skipped, "boundary_flag": self.boundary_flag, **self.detail}


def instance_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _matrices(space: SampledSpace, semimetrics):
    out = []
    for rho in semimetrics:
        if isinstance(rho, Semimetric):
            if rho.bound > 1:
                raise ValueError(f"semimetric bound {rho.bound} exceeds 1")
            out.append(eval_matrix(space, rho).values)
        else:
            d = as_array(rho)
            if d.max(initial=0.0) > 1:
                raise ValueError("semimetric values exceed 1")
            out.append(d)
    return out


def verify_lm_pz(space: SampledSpace, semimetrics, epsilon: float, oracle_limit: int = 15,
                 instance: str | None = None) -> list[CheckRecord]:
    """Check both averaging inequalities for semimetrics bounded by 1.

    part 1: H_{2 sqrt eps}(mean rho_i) <= 2 sum_i H_eps(rho_i), when every H_eps(rho_i) > 0
    part 2: min_m H_{2 sqrt eps}(rho_m) <= H_eps(mean rho_i)
    """
    mats = _matrices(space, semimetrics)
    w = space.weights
    k = len(mats)
    avg = sum(mats[1:], mats[0].copy()) / k
    big = 2 * math.sqrt(epsilon)
    h = lambda d, e: exact_entropy(d, w, e, oracle_limit).H  # noqa: E731
    tag = instance or instance_digest({"eps": epsilon, "mats": [m.tolist() for m in mats]})

    h_each = [h(d, epsilon) for d in mats]
    h_each_big = [h(d, big) for d in mats]
    h_avg = h(avg, epsilon)
    h_avg_big = h(avg, big)

    if min(h_each) > 0:
        p1 = CheckRecord("lm_pz.part1", tag, 2 * math.fsum(h_each) - h_avg_big,
                         detail={"epsilon": epsilon, "k": k})
    else:
        p1 = CheckRecord("lm_pz.part1", tag, None, skipped=True,
                         detail={"epsilon": epsilon, "k": k, "reason": "some H_eps(rho_i) is 0"})
    p2 = CheckRecord("lm_pz.part2", tag, h_avg - min(h_each_big), detail={"epsilon": epsilon, "k": k})
    return [p1, p2]


def weighted_mean(d: np.ndarray, w: np.ndarray) -> float:
    """Integral of a semimetric over the product measure."""
    return float(w @ d @ w)


def verify_prop1(system: SystemSpec, rho: Semimetric, k: int, n: int, epsilon: float,
                 oracle_limit: int = 32) -> list[CheckRecord]:
    """Check the two averaging-depth inequalities on a finite exact system.

    part 1: Psi(kn, eps) <= 2k Psi(n, eps^2/4), for eps < (1/3) * mean of rho
    part 2: Psi(n, eps) >= Psi(k, 2 sqrt(2 eps)), for k <= n
    """
    if not system.exact:
        raise ValueError("prop1 checks need a finite exact system")
    if rho.bound > 1:
        raise ValueError("semimetric must be bounded by 1")
    space = sample_space(system, enumerate=True)
    T = system.transformation()
    w = space.weights
    mats: dict[int, np.ndarray] = {}

    def avg(m):
        if m not in mats:
            mats[m] = eval_matrix(space, averaged_semimetric(rho, T, m)).values
        return mats[m]

    psi = lambda m, e: exact_entropy(avg(m), w, e, oracle_limit).H  # noqa: E731
    tag = instance_digest({"system": system.to_dict(), "rho": rho.spec, "k": k, "n": n, "eps": epsilon})
    detail = {"k": k, "n": n, "epsilon": epsilon, "system": system.to_dict()["kind"]}
    out = []

    small = epsilon**2 / 4
    positive = epsilon < weighted_mean(avg(1), w) / 3
    if positive:
        base = psi(n, small)
        # T permutes atoms and keeps weights, so every shifted copy has the same entropy
        avg_n = averaged_semimetric(rho, T, n)
        shift_gap = 0.0
        for i in range(1, k):
            shifted = eval_matrix(space, shifted_semimetric(avg_n, T, i * n)).values
            shift_gap = max(shift_gap, abs(exact_entropy(shifted, w, small, oracle_limit).H - base))
        out.append(CheckRecord("prop1.shift_invariance", tag, -shift_gap if shift_gap else 0.0, detail=detail))
        out.append(CheckRecord("prop1.part1", tag, 2 * k * base - psi(k * n, epsilon), detail=detail))
    else:
        out.append(CheckRecord("prop1.part1", tag, None, skipped=True,
                               detail=dict(detail, reason="epsilon not below a third of the mean distance")))
    if k <= n:
        out.append(CheckRecord("prop1.part2", tag, psi(n, epsilon) - psi(k, 2 * math.sqrt(2 * epsilon)),
                               detail=detail))
    return out
