"""Bipartite factor graphs and the locality quantities derived from them.

Variables and factors are separately 0-indexed.  Where a vertex needs a side
tag it is written as a ``("var", i)`` or ``("factor", j)`` pair.  Distances
count edges on the bipartite graph, so variable-variable distances are even
and variable-factor distances odd.  Everything here is immutable after
construction and every operation is a pure function of its inputs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import ceil
from typing import Iterable, NamedTuple, Sequence

from .errors import InvalidArgumentError, ParseError

VAR = "var"
FACTOR = "factor"

Vertex = tuple[str, int]


@dataclass(frozen=True)
class FactorGraph:
    """Undirected bipartite graph between variables and factors.

    Both adjacency maps are stored; they must be transposes of each other.
    Factors with no incident variable are rejected.  Isolated variables are
    allowed (they simply have no emission constraints).
    """

    variable_to_factors: tuple[tuple[int, ...], ...]
    factor_to_variables: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        n_var = len(self.variable_to_factors)
        n_fac = len(self.factor_to_variables)
        for j, fvars in enumerate(self.factor_to_variables):
            if len(fvars) == 0:
                raise InvalidArgumentError(f"factor {j} has no incident variable")
            if list(fvars) != sorted(set(fvars)):
                raise InvalidArgumentError(f"factor {j} adjacency not sorted/unique")
            if fvars[0] < 0 or fvars[-1] >= n_var:
                raise InvalidArgumentError(f"factor {j} references variable out of range")
        for v, vfacs in enumerate(self.variable_to_factors):
            if list(vfacs) != sorted(set(vfacs)):
                raise InvalidArgumentError(f"variable {v} adjacency not sorted/unique")
            if vfacs and (vfacs[0] < 0 or vfacs[-1] >= n_fac):
                raise InvalidArgumentError(f"variable {v} references factor out of range")
        edges_from_vars = {(v, f) for v, vfacs in enumerate(self.variable_to_factors) for f in vfacs}
        edges_from_facs = {(v, f) for f, fvars in enumerate(self.factor_to_variables) for v in fvars}
        if edges_from_vars != edges_from_facs:
            raise InvalidArgumentError("adjacency maps are not transposes of each other")

    @property
    def num_variables(self) -> int:
        return len(self.variable_to_factors)

    @property
    def num_factors(self) -> int:
        return len(self.factor_to_variables)


def from_factors(num_variables: int, factor_to_variables: Sequence[Sequence[int]]) -> FactorGraph:
    """Build a graph from the factor-side adjacency only."""
    if num_variables < 1:
        raise InvalidArgumentError("need at least one variable")
    var_side: list[list[int]] = [[] for _ in range(num_variables)]
    for j, fvars in enumerate(factor_to_variables):
        for v in fvars:
            if not 0 <= int(v) < num_variables:
                raise InvalidArgumentError(f"factor {j} references variable {v} out of range")
            var_side[int(v)].append(j)
    return FactorGraph(
        tuple(tuple(sorted(set(fs))) for fs in var_side),
        tuple(tuple(sorted(set(int(v) for v in fvars))) for fvars in factor_to_variables),
    )


def build_chain_graph(num_variables: int) -> FactorGraph:
    """Chain topology: factor i joins variables i and i+1.

    Requires at least two variables (a chain with one variable has no factor;
    build such graphs with :func:`from_factors` directly).
    """
    if num_variables < 2:
        raise InvalidArgumentError("chain graph needs at least two variables")
    return from_factors(num_variables, [(i, i + 1) for i in range(num_variables - 1)])


def _check_vertex(g: FactorGraph, w: Vertex) -> None:
    side, i = w
    if side == VAR:
        if not 0 <= i < g.num_variables:
            raise InvalidArgumentError(f"variable index {i} out of range")
    elif side == FACTOR:
        if not 0 <= i < g.num_factors:
            raise InvalidArgumentError(f"factor index {i} out of range")
    else:
        raise InvalidArgumentError(f"unknown vertex side {side!r}")


def _distances_from_variables(g: FactorGraph, sources: Iterable[int]) -> tuple[list[int], list[int]]:
    """Multi-source BFS; returns (variable distances, factor distances), -1 if unreachable."""
    var_dist = [-1] * g.num_variables
    fac_dist = [-1] * g.num_factors
    queue: deque[Vertex] = deque()
    for v in sources:
        if var_dist[v] == -1:
            var_dist[v] = 0
            queue.append((VAR, v))
    while queue:
        side, i = queue.popleft()
        if side == VAR:
            d = var_dist[i]
            for f in g.variable_to_factors[i]:
                if fac_dist[f] == -1:
                    fac_dist[f] = d + 1
                    queue.append((FACTOR, f))
        else:
            d = fac_dist[i]
            for v in g.factor_to_variables[i]:
                if var_dist[v] == -1:
                    var_dist[v] = d + 1
                    queue.append((VAR, v))
    return var_dist, fac_dist


def graph_distance(g: FactorGraph, w: Vertex, w2: Vertex) -> int | None:
    """Shortest-path edge count between two tagged vertices, None if unreachable."""
    _check_vertex(g, w)
    _check_vertex(g, w2)
    if w[0] == VAR:
        var_dist, fac_dist = _distances_from_variables(g, [w[1]])
    else:
        # BFS from a factor: seed its variables at distance 1.
        var_dist = [-1] * g.num_variables
        fac_dist = [-1] * g.num_factors
        fac_dist[w[1]] = 0
        queue: deque[Vertex] = deque([(FACTOR, w[1])])
        while queue:
            side, i = queue.popleft()
            if side == VAR:
                for f in g.variable_to_factors[i]:
                    if fac_dist[f] == -1:
                        fac_dist[f] = var_dist[i] + 1
                        queue.append((FACTOR, f))
            else:
                for v in g.factor_to_variables[i]:
                    if var_dist[v] == -1:
                        var_dist[v] = fac_dist[i] + 1
                        queue.append((VAR, v))
    d = var_dist[w2[1]] if w2[0] == VAR else fac_dist[w2[1]]
    return None if d == -1 else d


class Neighborhood(NamedTuple):
    variables: tuple[int, ...]
    factors: tuple[int, ...]


def _check_variable_set(g: FactorGraph, J: Iterable[int]) -> tuple[int, ...]:
    js = tuple(sorted(set(int(v) for v in J)))
    if not js:
        raise InvalidArgumentError("variable set must be non-empty")
    if js[0] < 0 or js[-1] >= g.num_variables:
        raise InvalidArgumentError("variable set out of range")
    return js


def neighborhoods(g: FactorGraph, J: Iterable[int], m: int) -> Neighborhood:
    """Variables within distance 2m+2 of J and factors within 2m+1.

    The radius m must be non-negative.  J itself is always contained in the
    variable side of the result.
    """
    js = _check_variable_set(g, J)
    if m < 0:
        raise InvalidArgumentError("radius m must be >= 0")
    var_dist, fac_dist = _distances_from_variables(g, js)
    variables = tuple(v for v, d in enumerate(var_dist) if 0 <= d <= 2 * m + 2)
    factors = tuple(f for f, d in enumerate(fac_dist) if 0 <= d <= 2 * m + 1)
    return Neighborhood(variables, factors)


class BoundarySets(NamedTuple):
    interior: tuple[int, ...]
    boundary: tuple[int, ...]
    boundary_factors: tuple[int, ...]


def boundary_sets(g: FactorGraph, J: Iterable[int]) -> BoundarySets:
    """Split J into interior/boundary and list the factors crossing out of J.

    A variable is interior when every incident factor touches only J.  A
    factor of J is a boundary factor when it also touches the complement.
    """
    js = _check_variable_set(g, J)
    jset = set(js)
    interior = []
    boundary = []
    for v in js:
        if all(set(g.factor_to_variables[f]) <= jset for f in g.variable_to_factors[v]):
            interior.append(v)
        else:
            boundary.append(v)
    adjacent = sorted({f for v in js for f in g.variable_to_factors[v]})
    crossing = tuple(f for f in adjacent if not set(g.factor_to_variables[f]) <= jset)
    return BoundarySets(tuple(interior), tuple(boundary), crossing)


@dataclass(frozen=True)
class Partition:
    """Disjoint cover of the variable set by blocks.

    Blocks are stored with sorted members, ordered by their first variable,
    so equal partitions compare equal regardless of input order.
    """

    blocks: tuple[tuple[int, ...], ...]
    block_of: tuple[int, ...]

    @classmethod
    def from_blocks(cls, blocks: Sequence[Iterable[int]], num_variables: int) -> "Partition":
        normalized = sorted(
            (tuple(sorted(int(v) for v in block)) for block in blocks),
            key=lambda b: b[0] if b else -1,
        )
        seen: dict[int, int] = {}
        for k, block in enumerate(normalized):
            if not block:
                raise InvalidArgumentError("empty block in partition")
            for v in block:
                if v in seen:
                    raise InvalidArgumentError(f"variable {v} appears in more than one block")
                seen[v] = k
        if sorted(seen) != list(range(num_variables)):
            raise InvalidArgumentError("blocks do not cover the variable set exactly")
        block_of = tuple(seen[v] for v in range(num_variables))
        return cls(tuple(normalized), block_of)

    @property
    def num_variables(self) -> int:
        return len(self.block_of)


def singleton_partition(num_variables: int) -> Partition:
    return Partition.from_blocks([(v,) for v in range(num_variables)], num_variables)


def trivial_partition(num_variables: int) -> Partition:
    return Partition.from_blocks([tuple(range(num_variables))], num_variables)


@dataclass(frozen=True)
class GraphConstants:
    """Degree and reach constants of a graph plus per-block radii.

    upsilon        largest number of factors incident to one variable
    upsilon2       largest one-hop variable neighbourhood size, the variable
                   itself included
    upsilon_tilde  largest number of factors shared by two distinct variables
    n_per_block    half the largest distance from each block to any variable
    n              max of n_per_block
    """

    upsilon: int
    upsilon2: int
    upsilon_tilde: int
    n_per_block: tuple[int, ...]
    n: int


def graph_constants(g: FactorGraph, partition: Partition) -> GraphConstants:
    if partition.num_variables != g.num_variables:
        raise InvalidArgumentError("partition does not match graph size")
    upsilon = max((len(fs) for fs in g.variable_to_factors), default=0)
    upsilon2 = 1
    for v in range(g.num_variables):
        upsilon2 = max(upsilon2, len(neighborhoods(g, [v], 0).variables))
    upsilon_tilde = 0
    fac_sets = [set(fs) for fs in g.variable_to_factors]
    for v in range(g.num_variables):
        for w in range(v + 1, g.num_variables):
            shared = len(fac_sets[v] & fac_sets[w])
            if shared > upsilon_tilde:
                upsilon_tilde = shared
    n_per_block = []
    for block in partition.blocks:
        var_dist, _ = _distances_from_variables(g, block)
        if any(d == -1 for d in var_dist):
            raise InvalidArgumentError(
                "block cannot reach every variable; per-block radius undefined on disconnected graphs"
            )
        n_per_block.append(ceil(max(var_dist) / 2))
    return GraphConstants(
        upsilon=upsilon,
        upsilon2=upsilon2,
        upsilon_tilde=upsilon_tilde,
        n_per_block=tuple(n_per_block),
        n=max(n_per_block),
    )


class LocalityExponents(NamedTuple):
    a: int
    b: int


def locality_exponents(g: FactorGraph, partition: Partition, m: int) -> LocalityExponents:
    """Exponent pair governing how block updates couple across the partition.

    ``a`` doubles the largest count, over blocks K and boundary variables v of
    K, of factors of v that cross out of K.  ``b`` doubles the largest degree
    among variables not yet covered by the radius-(m-1) neighbourhood of some
    block; at m=0 the uncovered set is taken relative to the block itself.
    Either max over an empty set contributes 0.
    """
    if partition.num_variables != g.num_variables:
        raise InvalidArgumentError("partition does not match graph size")
    if m < 0:
        raise InvalidArgumentError("radius m must be >= 0")
    a = 0
    for block in partition.blocks:
        _, boundary, crossing = boundary_sets(g, block)
        crossing_set = set(crossing)
        for v in boundary:
            a = max(a, len(crossing_set & set(g.variable_to_factors[v])))
    b = 0
    for block in partition.blocks:
        covered = set(block) if m == 0 else set(neighborhoods(g, block, m - 1).variables)
        for v in range(g.num_variables):
            if v not in covered:
                b = max(b, len(g.variable_to_factors[v]))
    return LocalityExponents(2 * a, 2 * b)


def read_graph_file(path: str) -> FactorGraph:
    """Read the plain-text graph format.

    First line: ``M F`` (variable and factor counts).  Then one line per
    factor listing its variable indices separated by whitespace.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty graph file", path=path, line=1)
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError("expected 'M F' header", path=path, line=1)
    try:
        num_variables, num_factors = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("header counts must be integers", path=path, line=1) from None
    body = [ln for ln in lines[1:]]
    if len(body) < num_factors:
        raise ParseError(
            f"expected {num_factors} factor lines, found {len(body)}", path=path, line=len(lines)
        )
    factors = []
    for j in range(num_factors):
        parts = body[j].split()
        if not parts:
            raise ParseError(f"factor {j} line is empty", path=path, line=j + 2)
        try:
            factors.append(tuple(int(p) for p in parts))
        except ValueError:
            raise ParseError(f"factor {j} line has a non-integer token", path=path, line=j + 2) from None
    try:
        return from_factors(num_variables, factors)
    except InvalidArgumentError as exc:
        raise ParseError(str(exc), path=path) from exc


def write_graph_file(path: str, g: FactorGraph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.num_variables} {g.num_factors}\n")
        for fvars in g.factor_to_variables:
            fh.write(" ".join(str(v) for v in fvars) + "\n")
