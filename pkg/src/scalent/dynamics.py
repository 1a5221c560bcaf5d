"""System zoo, orbits, and averaged / shifted semimetrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .mm_space import (
    PRODUCT,
    TORUS,
    WORD,
    DistanceMatrix,
    MatrixCache,
    RepresentationError,
    SampledSpace,
    Semimetric,
    point_kind,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one named stream of a 64-bit seed."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


# --- systems --------------------------------------------------------------


class SystemSpec:
    """Base for the concrete systems below.

    ``exact`` systems are finite atom spaces on which the transformation is
    a weight-preserving permutation. ``max_depth`` bounds how many orbit
    columns (T^0 .. T^{max_depth-1}) faithfully represent the dynamics.
    """

    exact = False
    max_depth: int | None = None
    point_kind = TORUS

    def step(self, points):
        raise NotImplementedError

    def power(self, points, j: int):
        for _ in range(j):
            points = self.step(points)
        return points

    def sample(self, N: int, rng: np.random.Generator):
        raise NotImplementedError

    def atoms(self):
        raise ValueError(f"{type(self).__name__} has no finite atom enumeration")

    @property
    def atom_count(self) -> int | None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def transformation(self) -> "Transformation":
        return Transformation(self)


@dataclass(frozen=True)
class CyclicRotation(SystemSpec):
    """x -> x + p/q on the atoms {j/q}."""

    q: int
    p: int = 1

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"step {self.p} is not coprime to {self.q}")

    exact = True

    def _index(self, x):
        return np.rint(np.asarray(x) * self.q).astype(np.int64) % self.q

    def step(self, points):
        return self.power(points, 1)

    def power(self, points, j: int):
        return ((self._index(points) + self.p * j) % self.q) / self.q

    def sample(self, N, rng):
        return rng.integers(0, self.q, size=N) / self.q

    def atoms(self):
        return np.arange(self.q) / self.q, np.full(self.q, 1.0 / self.q)

    @property
    def atom_count(self):
        return self.q

    def to_dict(self):
        return {"kind": "cyclic_rotation", "q": self.q, "p": self.p}


@dataclass(frozen=True)
class TorusRotation(SystemSpec):
    """x -> x + alpha mod 1 with Lebesgue measure."""

    alpha: float = GOLDEN

    def step(self, points):
        y = np.asarray(points) + self.alpha
        y = y - np.floor(y)
        # guard against y == 1.0 from rounding
        return np.where(y >= 1.0, 0.0, y)

    def sample(self, N, rng):
        return rng.random(N)

    def to_dict(self):
        return {"kind": "torus_rotation", "alpha": self.alpha}


class _ShiftBase(SystemSpec):
    point_kind = WORD

    def step(self, points):
        return np.roll(points, -1, axis=1)

    def power(self, points, j: int):
        if j == 0:
            return points
        return np.roll(points, -(j % points.shape[1]), axis=1)


@dataclass(frozen=True)
class BernoulliShift(_ShiftBase):
    """I.i.d. symbols on words of length L.

    With ``cyclic`` the map is the cyclic shift of the word, an exact
    weight-preserving permutation of the a^L atoms. Without it the word is a
    window of the two-sided shift and only ``L`` orbit columns are valid for
    semimetrics that read position 0.
    """

    a: int = 2
    probs: tuple | None = None
    L: int = 8
    cyclic: bool = True

    def __post_init__(self):
        if not 2 <= self.a <= 256:
            raise ValueError("alphabet size must be in 2..256")
        if self.L < 1:
            raise ValueError("word length must be positive")
        if self.probs is not None:
            p = tuple(float(x) for x in self.probs)
            if len(p) != self.a or any(x <= 0 for x in p) or abs(math.fsum(p) - 1.0) > 1e-12:
                raise ValueError("probabilities must be positive, one per symbol, summing to 1")
            object.__setattr__(self, "probs", p)

    @property
    def exact(self):
        return self.cyclic

    @property
    def max_depth(self):
        return None if self.cyclic else self.L

    @property
    def _p(self):
        return self.probs if self.probs is not None else tuple([1.0 / self.a] * self.a)

    def sample(self, N, rng):
        if self.probs is None:
            return rng.integers(0, self.a, size=(N, self.L)).astype(np.uint8)
        return rng.choice(self.a, size=(N, self.L), p=self._p).astype(np.uint8)

    def atoms(self):
        if not self.cyclic:
            return super().atoms()
        words = np.array(list(itertools.product(range(self.a), repeat=self.L)), dtype=np.uint8)
        p = self._p
        counts = np.stack([(words == s).sum(axis=1) for s in range(self.a)], axis=1)
        # product over symbol counts in fixed symbol order: invariant under any
        # permutation of positions, bit for bit
        w = np.ones(len(words))
        for s in range(self.a):
            w = w * np.power(p[s], counts[:, s])
        return words, w

    @property
    def atom_count(self):
        return self.a**self.L if self.cyclic else None

    def to_dict(self):
        return {"kind": "bernoulli_shift", "a": self.a, "probs": list(self._p), "L": self.L, "cyclic": self.cyclic}


THUE_MORSE = ((0, 1), (1, 0))


@dataclass(frozen=True)
class SubstitutionShift(_ShiftBase):
    """Windows of length L cut at uniform offsets from a substitution fixed point.

    ``rules[s]`` is the image word of symbol s; ``rules[0]`` must start
    with 0. T is the shift on windows; with L stored symbols, ``L`` orbit
    columns are faithful for semimetrics reading position 0.
    """

    rules: tuple = THUE_MORSE
    L: int = 16
    prefix_length: int = 1 << 16

    def __post_init__(self):
        rules = tuple(tuple(int(s) for s in img) for img in self.rules)
        a = len(rules)
        if a < 2 or any(not img for img in rules) or any(s >= a or s < 0 for img in rules for s in img):
            raise ValueError("rules must map every symbol 0..a-1 to a nonempty word over the same alphabet")
        if rules[0][0] != 0 or len(rules[0]) < 2:
            raise ValueError("rules[0] must start with 0 and have length >= 2 to admit a fixed point")
        if self.prefix_length < self.L:
            raise ValueError("prefix must be at least one window long")
        object.__setattr__(self, "rules", rules)

    @property
    def max_depth(self):
        return self.L

    def fixed_point(self) -> np.ndarray:
        word = [0]
        while len(word) < self.prefix_length:
            word = [s for c in word for s in self.rules[c]]
        return np.array(word[: self.prefix_length], dtype=np.uint8)

    def sample(self, N, rng):
        fp = self.fixed_point()
        starts = rng.integers(0, len(fp) - self.L + 1, size=N)
        return fp[starts[:, None] + np.arange(self.L)[None, :]]

    def to_dict(self):
        return {"kind": "substitution_shift", "rules": [list(r) for r in self.rules], "L": self.L,
                "prefix_length": self.prefix_length}


@dataclass(frozen=True)
class ProductSystem(SystemSpec):
    """Coordinatewise product with the product measure."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 2:
            raise ValueError("a product needs at least two components")
        if any(isinstance(c, ProductSystem) for c in comps):
            raise ValueError("nested products are not supported")
        object.__setattr__(self, "components", comps)

    point_kind = PRODUCT

    @property
    def exact(self):
        return all(c.exact for c in self.components)

    @property
    def max_depth(self):
        depths = [c.max_depth for c in self.components if c.max_depth is not None]
        return min(depths) if depths else None

    def step(self, points):
        return tuple(c.step(p) for c, p in zip(self.components, points))

    def power(self, points, j):
        return tuple(c.power(p, j) for c, p in zip(self.components, points))

    def sample(self, N, rng):
        # independent component streams derived from the parent generator
        seeds = rng.integers(0, 2**63, size=len(self.components))
        return tuple(c.sample(N, np.random.Generator(np.random.Philox(int(s))))
                     for c, s in zip(self.components, seeds))

    def atoms(self):
        parts = [c.atoms() for c in self.components]
        sizes = [len(w) for _, w in parts]
        grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
        idx = [g.ravel() for g in grids]
        points = tuple(p[i] for (p, _), i in zip(parts, idx))
        w = np.ones(len(idx[0]))
        for (_, cw), i in zip(parts, idx):
            w = w * cw[i]
        return points, w

    @property
    def atom_count(self):
        counts = [c.atom_count for c in self.components]
        return None if None in counts else math.prod(counts)

    def to_dict(self):
        return {"kind": "product", "components": [c.to_dict() for c in self.components]}


def system_from_dict(d: dict) -> SystemSpec:
    d = dict(d)
    kind = d.pop("kind")
    if kind == "cyclic_rotation":
        return CyclicRotation(**d)
    if kind == "torus_rotation":
        return TorusRotation(**d)
    if kind == "bernoulli_shift":
        if d.get("probs") is not None:
            d["probs"] = tuple(d["probs"])
        return BernoulliShift(**d)
    if kind == "substitution_shift":
        d["rules"] = tuple(tuple(r) for r in d.get("rules", THUE_MORSE))
        return SubstitutionShift(**d)
    if kind == "product":
        return ProductSystem(tuple(system_from_dict(c) for c in d["components"]))
    raise ValueError(f"unknown system kind {kind!r}")


# --- transformation, sampling, orbits ------------------------------------


class Transformation:
    """The map T of a system, acting on whole point arrays."""

    def __init__(self, system: SystemSpec):
        self.system = system

    invertible = True

    @property
    def exact(self) -> bool:
        return self.system.exact

    @property
    def max_depth(self) -> int | None:
        return self.system.max_depth

    def __call__(self, points):
        return self.system.step(points)

    def power(self, points, j: int):
        if j < 0:
            raise ValueError("only forward iterates are supported")
        return self.system.power(points, j)

    @property
    def spec(self) -> dict:
        return self.system.to_dict()


def sample_space(spec: SystemSpec, N: int | None = None, seed: int = 0, enumerate: bool = False) -> SampledSpace:
    """Empirical (or, with ``enumerate``, exact atomic) stand-in for the invariant measure."""
    if enumerate:
        count = spec.atom_count
        if not spec.exact or count is None:
            raise ValueError(f"{spec.to_dict()['kind']} is not a finite exact system; cannot enumerate")
        if N is not None and N != count:
            if N > count:
                raise ValueError(f"N={N} exceeds the {count} atoms of the system")
            raise ValueError(f"enumeration returns all {count} atoms; got N={N}")
        points, weights = spec.atoms()
        prov = {"system": spec.to_dict(), "N": count, "seed": None, "enumerate": True}
        return SampledSpace(points, weights, prov)
    if N is None or N < 1:
        raise ValueError("N must be a positive integer")
    points = spec.sample(N, rng_for(seed, 0))
    prov = {"system": spec.to_dict(), "N": N, "seed": seed, "enumerate": False}
    return SampledSpace(points, None, prov)


class OrbitTable:
    """Columns T^0 x, ..., T^{depth-1} x for all sample points."""

    def __init__(self, space: SampledSpace, T: Transformation, depth: int):
        if depth < 1:
            raise ValueError("depth must be positive")
        if T.max_depth is not None and depth > T.max_depth:
            raise ValueError(f"orbit depth {depth} exceeds the system's valid depth {T.max_depth}")
        _check_kind(space, T)
        cols = [space.points]
        for _ in range(depth - 1):
            cols.append(T(cols[-1]))
        self.columns = cols
        self.space = space
        self.T = T

    @property
    def depth(self) -> int:
        return len(self.columns)

    def __getitem__(self, k):
        return self.columns[k]


def _check_kind(space: SampledSpace, T: Transformation):
    expected = T.system.point_kind
    if space.kind != expected:
        raise RepresentationError(f"{T.spec['kind']} acts on {expected} points, space holds {space.kind}")


def averaged_semimetric(rho: Semimetric, T: Transformation, n: int) -> Semimetric:
    """(x, y) -> (1/n) sum_{k<n} rho(T^k x, T^k y)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return rho
    if T.max_depth is not None and n > T.max_depth:
        raise ValueError(f"averaging depth {n} exceeds the system's valid depth {T.max_depth}")

    def cross(a, b):
        total = rho.cross(a, b)
        for _ in range(1, n):
            a, b = T(a), T(b)
            total = total + rho.cross(a, b)
        return total / n

    spec = {"kind": "averaged", "n": n, "base": rho.spec, "system": T.spec}
    return Semimetric("averaged", rho.bound, cross, spec)


def shifted_semimetric(rho: Semimetric, T: Transformation, j: int) -> Semimetric:
    """(x, y) -> rho(T^j x, T^j y)."""
    if j < 0:
        raise ValueError("shift must be nonnegative")
    if j == 0:
        return rho

    def cross(a, b):
        return rho.cross(T.power(a, j), T.power(b, j))

    spec = {"kind": "shifted", "j": j, "base": rho.spec, "system": T.spec}
    return Semimetric("shifted", rho.bound, cross, spec)


def averaged_matrix_stream(space: SampledSpace, rho: Semimetric, T: Transformation, n_grid: Sequence[int],
                           orbit: OrbitTable | None = None,
                           cache: MatrixCache | None = None) -> Iterator[tuple[int, DistanceMatrix]]:
    """Yield ``(n, matrix of T_av^n rho)`` for increasing n in ``n_grid``.

    Uses the running sum S_n = S_{n-1} + rho(T^{n-1} x, T^{n-1} y), so the
    matrices agree bit for bit with :func:`averaged_semimetric`.
    """
    grid = sorted(set(int(n) for n in n_grid))
    if not grid or grid[0] < 1:
        raise ValueError("n grid must contain positive integers")
    top = grid[-1]
    if orbit is None:
        orbit = OrbitTable(space, T, top)
    elif orbit.depth < top:
        raise ValueError(f"orbit table depth {orbit.depth} < max n {top}")
    prov = space.provenance if isinstance(space.provenance, dict) else None
    averaged = {n: averaged_semimetric(rho, T, n) for n in grid}

    if cache is not None and prov is not None:
        if all(cache.has(prov, averaged[n]) for n in grid):
            for n in grid:
                yield n, cache.get(prov, averaged[n])
            return

    wanted = set(grid)
    total = None
    for n in range(1, top + 1):
        col = orbit[n - 1]
        term = rho.cross(col, col)
        total = term if total is None else total + term
        if n in wanted:
            dm = DistanceMatrix(total / n if n > 1 else total, rho.bound)
            if cache is not None and prov is not None:
                cache.put(prov, averaged[n], dm)
            yield n, dm
