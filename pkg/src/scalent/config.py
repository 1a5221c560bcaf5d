"""Experiment configuration: a YAML file validated against a closed schema.

Unknown keys anywhere are errors. The grammar is documented in README.md;
``load_config`` turns every validation problem into a :class:`ConfigError`
whose message names the offending field path (``system.components.1.L``).
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import dynamics as dyn
from . import mm_space as mm
from .cover import DEFAULT_ORACLE_LIMIT


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 2."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --- systems --------------------------------------------------------------


class CyclicRotationCfg(_Strict):
    kind: Literal["cyclic_rotation"]
    q: int = Field(ge=1)
    p: int = 1

    @model_validator(mode="after")
    def _coprime(self):
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"step p={self.p} is not coprime to q={self.q}")
        return self

    def build(self):
        return dyn.CyclicRotation(self.q, self.p)


class TorusRotationCfg(_Strict):
    kind: Literal["torus_rotation"]
    alpha: float = dyn.GOLDEN

    def build(self):
        return dyn.TorusRotation(self.alpha)


class BernoulliShiftCfg(_Strict):
    kind: Literal["bernoulli_shift"]
    a: int = Field(2, ge=2, le=256)
    probs: Optional[list[float]] = None
    L: int = Field(8, ge=1)
    cyclic: bool = True

    @model_validator(mode="after")
    def _probs(self):
        if self.probs is not None:
            if len(self.probs) != self.a:
                raise ValueError(f"probs has {len(self.probs)} entries for an alphabet of size {self.a}")
            if any(p <= 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise ValueError("probs must be positive and sum to 1")
        return self

    def build(self):
        return dyn.BernoulliShift(self.a, None if self.probs is None else tuple(self.probs), self.L, self.cyclic)


class SubstitutionShiftCfg(_Strict):
    kind: Literal["substitution_shift"]
    rules: list[list[int]] = [list(r) for r in dyn.THUE_MORSE]
    L: int = Field(16, ge=1)
    prefix_length: int = Field(1 << 16, ge=1)

    def build(self):
        return dyn.SubstitutionShift(tuple(tuple(r) for r in self.rules), self.L, self.prefix_length)


LeafSystemCfg = Annotated[
    Union[CyclicRotationCfg, TorusRotationCfg, BernoulliShiftCfg, SubstitutionShiftCfg],
    Field(discriminator="kind"),
]


class ProductCfg(_Strict):
    kind: Literal["product"]
    components: list[LeafSystemCfg] = Field(min_length=2)

    def build(self):
        return dyn.ProductSystem(tuple(c.build() for c in self.components))


SystemCfg = Annotated[
    Union[CyclicRotationCfg, TorusRotationCfg, BernoulliShiftCfg, SubstitutionShiftCfg, ProductCfg],
    Field(discriminator="kind"),
]


# --- semimetrics ----------------------------------------------------------


class ArcCfg(_Strict):
    kind: Literal["arc"]

    def build(self):
        return mm.arc_semimetric()


class CutCfg(_Strict):
    """Exactly one of ``breaks`` (torus intervals) or ``position`` (word symbol)."""

    kind: Literal["cut"]
    breaks: Optional[list[float]] = None
    position: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _one_labeling(self):
        if (self.breaks is None) == (self.position is None):
            raise ValueError("cut needs exactly one of 'breaks' or 'position'")
        if self.breaks is not None:
            b = self.breaks
            if not b or any(not 0 < x < 1 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
                raise ValueError("breaks must be nonempty, strictly increasing, inside (0, 1)")
        return self

    def build(self):
        if self.breaks is not None:
            return mm.cut_semimetric(mm.interval_labeling(self.breaks))
        return mm.cut_semimetric(mm.symbol_labeling(self.position))


class HammingCfg(_Strict):
    kind: Literal["hamming"]
    length: Optional[int] = Field(None, ge=1)

    def build(self):
        return mm.hamming_semimetric(self.length)


class ZeroCfg(_Strict):
    kind: Literal["zero"]

    def build(self):
        return mm.zero_semimetric()


LeafSemimetricCfg = Annotated[Union[ArcCfg, CutCfg, HammingCfg, ZeroCfg], Field(discriminator="kind")]


class WeightedComponentCfg(_Strict):
    weight: float = Field(gt=0)
    semimetric: LeafSemimetricCfg


class WeightedSumCfg(_Strict):
    """Coordinatewise sum over product components, in system order."""

    kind: Literal["weighted_sum"]
    components: list[WeightedComponentCfg] = Field(min_length=1)

    def build(self):
        return mm.weighted_sum_semimetric([(c.weight, c.semimetric.build()) for c in self.components])


SemimetricCfg = Annotated[
    Union[ArcCfg, CutCfg, HammingCfg, ZeroCfg, WeightedSumCfg],
    Field(discriminator="kind"),
]


# --- experiment -----------------------------------------------------------


class OutputCfg(_Strict):
    dir: str = "out"
    name: str = Field("profile", pattern=r"^[A-Za-z0-9._-]+$")


class ExperimentConfig(_Strict):
    system: SystemCfg
    semimetric: SemimetricCfg
    n_grid: list[int] = Field(min_length=1)
    eps_grid: list[float] = Field(min_length=1)
    N: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    estimator: Literal["exact", "greedy"] = "exact"
    enumerate: bool = False
    oracle_limit: int = Field(DEFAULT_ORACLE_LIMIT, ge=1)
    C_max: float = Field(16.0, gt=0)
    ratio_cap: float = Field(2.0, gt=0)
    growth_cap: float = Field(2.0, gt=0)
    workers: int = Field(1, ge=1)
    cache: bool = True
    output: OutputCfg = OutputCfg()

    @field_validator("n_grid")
    @classmethod
    def _n_grid(cls, v):
        if any(n < 1 for n in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing positive integers")
        return v

    @field_validator("eps_grid")
    @classmethod
    def _eps_grid(cls, v):
        if any(not e > 0 for e in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps_grid must be strictly decreasing positive numbers")
        return v

    def build_system(self) -> dyn.SystemSpec:
        return self.system.build()

    def build_semimetric(self) -> mm.Semimetric:
        return self.semimetric.build()


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        # drop the discriminator tags pydantic inserts into union locations
        loc = [str(p) for p in e["loc"] if not (isinstance(p, str) and p.endswith("Cfg"))]
        loc = [p for p in loc if p not in _KINDS]
        path = ".".join(loc) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


_KINDS = {"cyclic_rotation", "torus_rotation", "bernoulli_shift", "substitution_shift", "product",
          "arc", "cut", "hamming", "zero", "weighted_sum"}


def parse_config(data) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None
    # cross-field checks that need the built objects
    try:
        system = cfg.build_system()
        rho = cfg.build_semimetric()
    except ValueError as err:
        raise ConfigError(f"system: {err}") from None
    if not cfg.enumerate:
        if cfg.N is None:
            raise ConfigError("N: required when sampling (enumerate: false)")
        if cfg.seed is None:
            raise ConfigError("seed: required when sampling (enumerate: false)")
    else:
        if not system.exact or system.atom_count is None:
            raise ConfigError(f"enumerate: {system.to_dict()['kind']} is not a finite exact system")
        if cfg.N is not None and cfg.N != system.atom_count:
            raise ConfigError(f"N: enumeration yields all {system.atom_count} atoms, got N={cfg.N}")
    if isinstance(cfg.semimetric, WeightedSumCfg):
        if not isinstance(cfg.system, ProductCfg):
            raise ConfigError("semimetric: weighted_sum needs a product system")
        if len(cfg.semimetric.components) != len(cfg.system.components):
            raise ConfigError(f"semimetric.components: {len(cfg.semimetric.components)} entries for "
                              f"{len(cfg.system.components)} product components")
    depth = system.max_depth
    if depth is not None and max(cfg.n_grid) > depth:
        raise ConfigError(f"n_grid: n={max(cfg.n_grid)} exceeds the faithful orbit depth {depth} of this system")
    del rho
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read, apply top-level ``overrides`` (None values ignored), validate."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: not valid YAML: {err}") from None
    if overrides and isinstance(data, dict):
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    return parse_config(data)
