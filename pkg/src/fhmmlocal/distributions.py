"""Dense probability tables over small variable sets, and products of them.

A :class:`DenseTable` stores a nonnegative table over the joint state space of
a sorted tuple of variables, flattened in mixed radix with the first listed
variable most significant.  That convention matches a C-order
``values.reshape((L,) * k)`` with axes in variable order, which is how every
operation here is implemented.

A :class:`FactorizedDistribution` is a product of independent block tables
over a partition of the variable set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateDistributionError,
    InvalidArgumentError,
    UnsupportedQueryError,
)
from .factor_graph import Partition


@dataclass(frozen=True)
class DenseTable:
    """Immutable nonnegative table over the joint states of some variables."""

    variables: tuple[int, ...]
    cardinality: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.cardinality < 1:
            raise InvalidArgumentError("cardinality must be >= 1")
        variables = tuple(int(v) for v in self.variables)
        if list(variables) != sorted(set(variables)):
            raise InvalidArgumentError("variables must be sorted and unique")
        values = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if values.size != self.cardinality ** len(variables):
            raise InvalidArgumentError(
                f"table has {values.size} entries, expected "
                f"{self.cardinality ** len(variables)}"
            )
        low = values.min() if values.size else 0.0
        if not low >= 0.0:  # also catches NaN
            if np.isnan(low):
                raise InvalidArgumentError("table entries must be finite")
            raise DegenerateDistributionError("table has a negative entry")
        if values.size and np.isinf(values.max()):
            raise InvalidArgumentError("table entries must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "values", values)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def nd(self) -> np.ndarray:
        """Read-only view shaped (L, ..., L) with axes in variable order."""
        return self.values.reshape((self.cardinality,) * self.num_variables)

    def config_index(self, config: Sequence[int]) -> int:
        """Flat index of one joint configuration (first variable most significant)."""
        if len(config) != self.num_variables:
            raise InvalidArgumentError("configuration length mismatch")
        idx = 0
        for x in config:
            if not 0 <= int(x) < self.cardinality:
                raise InvalidArgumentError("state out of range")
            idx = idx * self.cardinality + int(x)
        return idx


def uniform_table(variables: Iterable[int], cardinality: int) -> DenseTable:
    vs = tuple(sorted(int(v) for v in variables))
    size = cardinality ** len(vs)
    return DenseTable(vs, cardinality, np.full(size, 1.0 / size))


def point_mass(variables: Iterable[int], cardinality: int, config: Sequence[int]) -> DenseTable:
    vs = tuple(sorted(int(v) for v in variables))
    values = np.zeros(cardinality ** len(vs))
    probe = DenseTable(vs, cardinality, np.full_like(values, 1.0))
    values[probe.config_index(config)] = 1.0
    return DenseTable(vs, cardinality, values)


def normalize(table: DenseTable) -> DenseTable:
    """Rescale to total mass one.

    Raises a degenerate-distribution error when the table is all zero (a
    negative entry is already rejected at construction).
    """
    total = float(table.values.sum())
    if total <= 0.0:
        raise DegenerateDistributionError("cannot normalize a table with zero total mass")
    return DenseTable(table.variables, table.cardinality, table.values / total)


def marginalize(table: DenseTable, keep: Iterable[int]) -> DenseTable:
    """Sum out every variable not listed in ``keep`` (mass preserved)."""
    keep_sorted = tuple(sorted(set(int(v) for v in keep)))
    if not set(keep_sorted) <= set(table.variables):
        raise InvalidArgumentError("keep set is not a subset of the table's variables")
    axes = tuple(i for i, v in enumerate(table.variables) if v not in set(keep_sorted))
    summed = table.nd().sum(axis=axes) if axes else table.nd()
    return DenseTable(keep_sorted, table.cardinality, np.asarray(summed).reshape(-1))


def product_join(tables: Sequence[DenseTable]) -> DenseTable:
    """Outer product of tables over pairwise-disjoint variable sets."""
    if not tables:
        raise InvalidArgumentError("product_join needs at least one table")
    cardinality = tables[0].cardinality
    all_vars: list[int] = []
    for t in tables:
        if t.cardinality != cardinality:
            raise InvalidArgumentError("tables disagree on cardinality")
        all_vars.extend(t.variables)
    union = tuple(sorted(all_vars))
    if len(set(union)) != len(union):
        raise InvalidArgumentError("tables share a variable; product_join needs disjoint sets")
    pos = {v: i for i, v in enumerate(union)}
    k = len(union)
    out = np.ones((cardinality,) * k)
    for t in tables:
        shape = [1] * k
        for v in t.variables:
            shape[pos[v]] = cardinality
        # Sorted table variables keep their relative order inside the sorted
        # union, so a plain reshape aligns axes for broadcasting.
        out = out * t.nd().reshape(shape)
    return DenseTable(union, cardinality, out.reshape(-1))


def tv_distance(p: DenseTable, q: DenseTable) -> float:
    """Total variation distance: half the L1 distance between the tables."""
    if p.variables != q.variables or p.cardinality != q.cardinality:
        raise InvalidArgumentError("tv_distance requires identical variable sets and cardinality")
    return 0.5 * float(np.abs(p.values - q.values).sum())


@dataclass(frozen=True)
class FactorizedDistribution:
    """Product distribution with one normalized table per partition block."""

    partition: Partition
    block_tables: tuple[DenseTable, ...]

    def __post_init__(self) -> None:
        if len(self.block_tables) != len(self.partition.blocks):
            raise InvalidArgumentError("one table per block required")
        for block, table in zip(self.partition.blocks, self.block_tables):
            if table.variables != block:
                raise InvalidArgumentError(
                    f"table variables {table.variables} do not match block {block}"
                )
            if abs(float(table.values.sum()) - 1.0) > 1e-8:
                raise DegenerateDistributionError(
                    f"block {block} table is not normalized"
                )
        object.__setattr__(self, "block_tables", tuple(self.block_tables))

    @property
    def cardinality(self) -> int:
        return self.block_tables[0].cardinality

    def block_for(self, variable: int) -> DenseTable:
        return self.block_tables[self.partition.block_of[variable]]

    def variable_marginal(self, variable: int) -> np.ndarray:
        """Length-L marginal pmf of a single variable."""
        table = self.block_for(variable)
        if len(table.variables) == 1:
            return table.values
        axis = table.variables.index(variable)
        nd = table.nd()
        drop = tuple(i for i in range(nd.ndim) if i != axis)
        return nd.sum(axis=drop)

    def marginal(self, J: Iterable[int]) -> DenseTable:
        """Joint marginal of J; J must sit inside a single block."""
        js = tuple(sorted(set(int(v) for v in J)))
        if not js:
            raise InvalidArgumentError("marginal of empty set requested")
        owners = {self.partition.block_of[v] for v in js}
        if len(owners) != 1:
            raise UnsupportedQueryError(
                f"variables {js} span multiple blocks; joint marginal unavailable"
            )
        return marginalize(self.block_tables[owners.pop()], js)

    def to_dense(self) -> DenseTable:
        """Materialize the full product table (use only for small joints)."""
        return product_join(self.block_tables)


def _marginal_of(dist: DenseTable | FactorizedDistribution, js: tuple[int, ...]) -> DenseTable:
    if isinstance(dist, DenseTable):
        return marginalize(dist, js)
    return dist.marginal(js)


def ltv_distance(
    p: DenseTable | FactorizedDistribution,
    q: DenseTable | FactorizedDistribution,
    J: Iterable[int],
) -> float:
    """Total variation between the J-marginals of two distributions.

    For factorized inputs J must lie within a single block of each operand
    (not necessarily the same block structure on both sides).
    """
    js = tuple(sorted(set(int(v) for v in J)))
    return tv_distance(_marginal_of(p, js), _marginal_of(q, js))


def outer_product_tables(vectors: Sequence[np.ndarray], variables: Sequence[int], cardinality: int) -> DenseTable:
    """DenseTable equal to the product of per-variable pmfs."""
    if len(vectors) != len(variables):
        raise InvalidArgumentError("one vector per variable required")
    order = np.argsort(np.asarray(variables))
    vs = tuple(int(variables[i]) for i in order)
    values = reduce(np.multiply.outer, (np.asarray(vectors[i], dtype=float) for i in order))
    return DenseTable(vs, cardinality, np.asarray(values).reshape(-1))
