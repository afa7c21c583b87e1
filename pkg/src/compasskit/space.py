"""Configuration lattice: parameters, normalization, distance, adjacency, LHS."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

# A configuration is one value index per parameter, in space order.
Config = tuple[int, ...]

CATEGORICAL = "categorical"
ORDINAL = "ordinal-discrete"
CONTINUOUS = "continuous-grid"
KINDS = (CATEGORICAL, ORDINAL, CONTINUOUS)


class SpaceError(ValueError):
    """Invalid space declaration or configuration."""


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    kind: str
    values: tuple

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SpaceError(f"parameter {self.name!r}: unknown kind {self.kind!r}")
        if len(self.values) == 0:
            raise SpaceError(f"parameter {self.name!r}: empty value list")
        if self.kind == CATEGORICAL:
            if len(set(self.values)) != len(self.values):
                raise SpaceError(f"parameter {self.name!r}: duplicate categories")
        else:
            vals = list(self.values)
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
                raise SpaceError(f"parameter {self.name!r}: numeric kinds need numeric values")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise SpaceError(f"parameter {self.name!r}: values must be strictly increasing")

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def position(self, index: int) -> float:
        m = len(self.values)
        return 0.0 if m == 1 else index / (m - 1)


@dataclass(frozen=True)
class ConfigSpace:
    """Flat product of parameters, optionally with excluded points removed."""

    params: tuple[ParameterSpec, ...]
    excluded: frozenset[Config] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not self.params:
            raise SpaceError("space has no parameters")
        names = [p.name for p in self.params]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SpaceError(f"duplicate parameter name(s): {sorted(dup)}")
        for c in self.excluded:
            if not self._in_bounds(c):
                raise SpaceError(f"excluded assignment out of bounds: {c}")
        if self.size < 1:
            raise SpaceError("every configuration is excluded")

    # -- shape -------------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.params)

    @property
    def product_size(self) -> int:
        return math.prod(self.shape)

    @property
    def size(self) -> int:
        return self.product_size - len(self.excluded)

    def __len__(self) -> int:
        return self.size

    def _in_bounds(self, c: Sequence[int]) -> bool:
        return len(c) == len(self.params) and all(
            0 <= i < p.size for i, p in zip(c, self.params)
        )

    def contains(self, c: Sequence[int]) -> bool:
        return self._in_bounds(c) and tuple(c) not in self.excluded

    def check(self, c: Sequence[int]) -> Config:
        c = tuple(int(i) for i in c)
        if not self.contains(c):
            raise SpaceError(f"configuration {c} is not in the space")
        return c

    # -- enumeration -------------------------------------------------------

    def enumerate(self) -> Iterator[Config]:
        """All valid configurations in lexicographic index order."""
        for c in itertools.product(*(range(p.size) for p in self.params)):
            if c not in self.excluded:
                yield c

    @cached_property
    def configs(self) -> list[Config]:
        return list(self.enumerate())

    @cached_property
    def row_of(self) -> dict[Config, int]:
        return {c: i for i, c in enumerate(self.configs)}

    @cached_property
    def coords(self) -> np.ndarray:
        """Normalized coordinates of every configuration, one row each."""
        return np.array([self.normalize(c) for c in self.configs], dtype=float).reshape(
            len(self.configs), len(self.params)
        )

    @cached_property
    def categorical_mask(self) -> np.ndarray:
        return np.array([p.categorical for p in self.params], dtype=bool)

    # -- geometry ----------------------------------------------------------

    def normalize(self, c: Sequence[int]) -> np.ndarray:
        return np.array([p.position(i) for p, i in zip(self.params, c)], dtype=float)

    def axis_deltas(self, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
        """Signed per-axis deltas b - a; categorical axes give 0 or 1."""
        out = np.empty(len(self.params))
        for k, (p, i, j) in enumerate(zip(self.params, a, b)):
            if p.categorical:
                out[k] = 0.0 if i == j else 1.0
            else:
                out[k] = p.position(j) - p.position(i)
        return out

    def distance(self, a: Sequence[int], b: Sequence[int]) -> float:
        return float(np.sqrt(np.sum(self.axis_deltas(a, b) ** 2)))

    def deltas_to_rows(self, c: Sequence[int], rows: np.ndarray) -> np.ndarray:
        """Vectorized axis_deltas from ``c`` to the configurations at ``rows``."""
        x = self.normalize(c)
        other = self.coords[rows]
        d = other - x
        cat = self.categorical_mask
        if cat.any():
            d[:, cat] = (np.abs(d[:, cat]) > 0).astype(float)
        return d

    def neighbors(self, c: Sequence[int]) -> list[Config]:
        """Configurations differing in exactly one parameter (one step on numeric axes)."""
        c = tuple(c)
        out: list[Config] = []
        for k, p in enumerate(self.params):
            if p.categorical:
                steps = [j for j in range(p.size) if j != c[k]]
            else:
                steps = [j for j in (c[k] - 1, c[k] + 1) if 0 <= j < p.size]
            for j in steps:
                n = c[:k] + (j,) + c[k + 1 :]
                if n not in self.excluded:
                    out.append(n)
        return out

    # -- labels ------------------------------------------------------------

    def label(self, c: Sequence[int]) -> dict[str, Any]:
        return {p.name: p.values[i] for p, i in zip(self.params, c)}

    def from_values(self, assignment: Mapping[str, Any]) -> Config:
        missing = set(self.names) - set(assignment)
        if missing:
            raise SpaceError(f"assignment is missing parameter(s) {sorted(missing)}")
        return self.check(_indices_for(self.params, assignment))

    def to_dict(self) -> dict:
        return {
            "parameters": [
                {"name": p.name, "kind": p.kind, "values": list(p.values)} for p in self.params
            ],
            "exclude": [self.label(c) for c in sorted(self.excluded)],
        }


def _value_index(p: ParameterSpec, value: Any) -> int:
    for i, v in enumerate(p.values):
        if v == value or (
            not p.categorical and isinstance(value, (int, float)) and math.isclose(v, value)
        ):
            return i
    raise SpaceError(f"parameter {p.name!r} has no value {value!r}")


def _indices_for(params: Sequence[ParameterSpec], assignment: Mapping[str, Any]) -> Config:
    by_name = {p.name: p for p in params}
    unknown = set(assignment) - set(by_name)
    if unknown:
        raise SpaceError(f"unknown parameter(s) {sorted(unknown)}")
    return tuple(_value_index(p, assignment[p.name]) for p in params)


def validate_space(raw: Mapping[str, Any]) -> ConfigSpace:
    """Build a ConfigSpace from the ``space`` section of a scenario file.

    ``exclude`` entries map parameter names to values. An entry naming every
    parameter removes one configuration; a partial entry removes every
    configuration that matches it on the named parameters.
    """
    raw_params = raw.get("parameters")
    if not raw_params:
        raise SpaceError("space.parameters is missing or empty")
    params = []
    for rp in raw_params:
        try:
            params.append(ParameterSpec(str(rp["name"]), str(rp["kind"]), tuple(rp["values"])))
        except KeyError as exc:
            raise SpaceError(f"parameter entry missing field {exc}") from None
    names = [p.name for p in params]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise SpaceError(f"duplicate parameter name(s): {dup}")

    excluded: set[Config] = set()
    for entry in raw.get("exclude") or []:
        by_name = {p.name: p for p in params}
        unknown = set(entry) - set(by_name)
        if unknown:
            raise SpaceError(f"exclude entry names unknown parameter(s) {sorted(unknown)}")
        fixed = {k: _value_index(by_name[k], v) for k, v in entry.items()}
        axes = [
            [fixed[p.name]] if p.name in fixed else range(p.size) for p in params
        ]
        excluded.update(itertools.product(*axes))

    space = ConfigSpace(tuple(params), frozenset(excluded))
    expected = raw.get("expected_size")
    if expected is not None and int(expected) != space.size:
        raise SpaceError(f"declared size {expected} but the space has {space.size} configurations")
    return space


def lhs_sample(space: ConfigSpace, n_init: int, seed: int) -> list[Config]:
    """Latin Hypercube seeds snapped onto the lattice.

    Each axis gets one uniform draw per stratum of an ``n_init``-way partition
    of [0, 1]. Numeric axes snap to the nearest grid value; categorical axes
    take ``floor(u * m)``, which gives stratified category counts. Excluded
    points move to their nearest valid configuration; duplicates are dropped.
    """
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if n_init > space.size:
        warnings.warn(f"n_init={n_init} exceeds |C|={space.size}; clamping", stacklevel=2)
        n_init = space.size
    rng = np.random.default_rng(seed)
    u = lhs_unit(n_init, len(space.params), rng)
    out: list[Config] = []
    seen: set[Config] = set()
    for row in u:
        idx = []
        for p, x in zip(space.params, row):
            m = p.size
            if p.categorical:
                idx.append(min(int(x * m), m - 1))
            else:
                idx.append(int(np.floor(x * (m - 1) + 0.5)))
        c = tuple(idx)
        if c in space.excluded:
            c = nearest_valid(space, c)
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def lhs_unit(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-cube LHS design, shape (n, dims): one point per stratum per column."""
    u = np.empty((n, dims))
    for j in range(dims):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return u


def nearest_valid(space: ConfigSpace, c: Config) -> Config:
    x = space.normalize(c)
    d = space.coords - x
    cat = space.categorical_mask
    d[:, cat] = (np.abs(d[:, cat]) > 0).astype(float)
    # argmin takes the first minimum, i.e. the lexicographically smallest tie
    return space.configs[int(np.argmin(np.sum(d * d, axis=1)))]


def seeding_probability(feasible_fraction: float, n_init: int) -> float:
    """Lower bound on the chance that ``n_init`` seeds hit the feasible set."""
    return 1.0 - (1.0 - feasible_fraction) ** n_init
