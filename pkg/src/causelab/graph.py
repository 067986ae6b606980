"""Directed acyclic graphs over named variables.

Nodes are addressed by name at the API boundary and by integer index
internally (index = position in the node sequence). Node sets cross the
boundary as iterables of names or indices and are packed into integer
bitmasks internally, which keeps the d-separation reachability loop and
the exhaustive enumerations fast enough for the desk-scale sweeps in the
test suite.

All values are immutable after construction and every operation is a
pure function, so concurrent reads are safe.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import UsageError

logger = logging.getLogger(__name__)

DEFAULT_INDEPENDENCE_LIMIT = 8
DEFAULT_ADJUSTMENT_LIMIT = 12


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True, init=False)
class Dag:
    """A directed acyclic graph; edges are (parent index, child index)."""

    nodes: tuple[str, ...]
    edges: frozenset[tuple[int, int]]
    _parent_masks: tuple[int, ...] = field(repr=False, compare=False)
    _child_masks: tuple[int, ...] = field(repr=False, compare=False)
    _descendant_masks: tuple[int, ...] = field(repr=False, compare=False)

    def __init__(self, nodes: Sequence[str], edges: Iterable[tuple] = ()):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise UsageError(f"duplicate node names in {nodes!r}")
        index = {name: i for i, name in enumerate(nodes)}
        norm = set()
        for u, v in edges:
            if (isinstance(u, str) and u not in index) or (
                isinstance(v, str) and v not in index
            ):
                raise UsageError(f"edge ({u!r}, {v!r}) references unknown node")
            i = index[u] if isinstance(u, str) else int(u)
            j = index[v] if isinstance(v, str) else int(v)
            if not (0 <= i < len(nodes) and 0 <= j < len(nodes)):
                raise UsageError(f"edge ({u!r}, {v!r}) references unknown node")
            if i == j:
                raise UsageError(f"self-loop at {nodes[i]!r}")
            norm.add((i, j))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(norm))
        n = len(nodes)
        pmask = [0] * n
        cmask = [0] * n
        for i, j in norm:
            pmask[j] |= 1 << i
            cmask[i] |= 1 << j
        object.__setattr__(self, "_parent_masks", tuple(pmask))
        object.__setattr__(self, "_child_masks", tuple(cmask))
        order = _topological_or_none(n, pmask)
        if order is None:
            raise UsageError("graph contains a directed cycle")
        desc = [1 << i for i in range(n)]
        for i in reversed(order):
            for j in _bits(cmask[i]):
                desc[i] |= desc[j]
        object.__setattr__(self, "_descendant_masks", tuple(desc))

    @property
    def n(self) -> int:
        return len(self.nodes)

    def index(self, node: str | int) -> int:
        if isinstance(node, str):
            try:
                return self.nodes.index(node)
            except ValueError:
                raise UsageError(f"unknown node {node!r}") from None
        i = int(node)
        if not 0 <= i < self.n:
            raise UsageError(f"node index {i} out of range")
        return i

    def mask(self, nodes: Iterable[str | int]) -> int:
        m = 0
        for node in nodes:
            m |= 1 << self.index(node)
        return m

    def names(self, mask: int) -> frozenset[str]:
        return frozenset(self.nodes[i] for i in _bits(mask))

    def parents(self, node: str | int) -> tuple[int, ...]:
        return tuple(_bits(self._parent_masks[self.index(node)]))

    def children(self, node: str | int) -> tuple[int, ...]:
        return tuple(_bits(self._child_masks[self.index(node)]))

    def descendants_mask(self, node: str | int, inclusive: bool = True) -> int:
        i = self.index(node)
        m = self._descendant_masks[i]
        return m if inclusive else m & ~(1 << i)

    def has_edge(self, u: str | int, v: str | int) -> bool:
        return (self.index(u), self.index(v)) in self.edges

    def adjacent(self, u: str | int, v: str | int) -> bool:
        i, j = self.index(u), self.index(v)
        return (i, j) in self.edges or (j, i) in self.edges

    def remove_edges(self, edges: Iterable[tuple]) -> "Dag":
        drop = {(self.index(u), self.index(v)) for u, v in edges}
        return Dag(self.nodes, self.edges - drop)


@dataclass(frozen=True)
class Cpdag:
    """Markov equivalence class: shared skeleton with forced orientations."""

    nodes: tuple[str, ...]
    directed: frozenset[tuple[str, str]]
    undirected: frozenset[tuple[str, str]]

    def __post_init__(self):
        und = frozenset(tuple(sorted(e)) for e in self.undirected)
        object.__setattr__(self, "undirected", und)
        dir_pairs = {tuple(sorted(e)) for e in self.directed}
        if dir_pairs & set(und):
            raise UsageError("directed and undirected edge sets overlap")
        Dag(self.nodes, self.directed)  # directed part must be acyclic


def _topological_or_none(n: int, parent_masks: Sequence[int]) -> list[int] | None:
    placed = 0
    order = []
    remaining = set(range(n))
    while remaining:
        ready = sorted(i for i in remaining if parent_masks[i] & ~placed == 0)
        if not ready:
            return None
        for i in ready:
            order.append(i)
            placed |= 1 << i
            remaining.discard(i)
    return order


def topological_order(g: Dag) -> tuple[int, ...]:
    """Parents before children; ties broken by ascending node index."""
    placed = 0
    order = []
    remaining = list(range(g.n))
    while remaining:
        for i in remaining:
            if g._parent_masks[i] & ~placed == 0:
                order.append(i)
                placed |= 1 << i
                remaining.remove(i)
                break
    return tuple(order)


def _ancestors_of_mask(g: Dag, mask: int) -> int:
    anc = mask
    frontier = mask
    while frontier:
        nxt = 0
        for i in _bits(frontier):
            nxt |= g._parent_masks[i]
        nxt &= ~anc
        anc |= nxt
        frontier = nxt
    return anc


def _dsep_masks(g: Dag, amask: int, bmask: int, zmask: int) -> bool:
    """Reachability test: True iff no active path joins amask and bmask.

    Standard two-direction traversal: a state is (node, direction of
    entry); entry from a child may continue anywhere unless the node is
    conditioned on, entry from a parent may continue to children unless
    conditioned on, and may bounce back up exactly when the node is an
    ancestor of (or in) the conditioning set.
    """
    anc_z = _ancestors_of_mask(g, zmask)
    visited_up = 0
    visited_down = 0
    pend_up = amask
    pend_down = 0
    parent_masks = g._parent_masks
    child_masks = g._child_masks
    while pend_up or pend_down:
        if pend_up:
            low = pend_up & -pend_up
            pend_up ^= low
            if visited_up & low:
                continue
            visited_up |= low
            i = low.bit_length() - 1
            if not low & zmask:
                if low & bmask:
                    return False
                pend_up |= parent_masks[i] & ~visited_up
                pend_down |= child_masks[i] & ~visited_down
        else:
            low = pend_down & -pend_down
            pend_down ^= low
            if visited_down & low:
                continue
            visited_down |= low
            i = low.bit_length() - 1
            if not low & zmask:
                if low & bmask:
                    return False
                pend_down |= child_masks[i] & ~visited_down
            if low & anc_z:
                pend_up |= parent_masks[i] & ~visited_up
    return True


def d_separated(
    g: Dag,
    a: Iterable[str | int],
    b: Iterable[str | int],
    z: Iterable[str | int] = (),
) -> bool:
    """True iff every path between a and b is blocked by z."""
    amask, bmask, zmask = g.mask(a), g.mask(b), g.mask(z)
    if not amask or not bmask:
        raise UsageError("a and b must be nonempty")
    if amask & bmask or amask & zmask or bmask & zmask:
        raise UsageError("a, b, z must be pairwise disjoint")
    return _dsep_masks(g, amask, bmask, zmask)


def implied_independences(
    g: Dag, limit: int = DEFAULT_INDEPENDENCE_LIMIT
) -> tuple[tuple[str, str, frozenset[str]], ...]:
    """All (singleton, singleton, conditioning set) d-separations of g.

    Triples are canonical: the two singletons in lexicographic name
    order, conditioning sets ranging over all subsets of the remaining
    nodes, output sorted deterministically.
    """
    if g.n > limit:
        raise UsageError(f"graph has {g.n} nodes, enumeration limit is {limit}")
    out = []
    order = sorted(range(g.n), key=lambda i: g.nodes[i])
    for ai, bi in itertools.combinations(order, 2):
        rest = [k for k in range(g.n) if k not in (ai, bi)]
        amask, bmask = 1 << ai, 1 << bi
        for r in range(len(rest) + 1):
            for zs in itertools.combinations(rest, r):
                zmask = 0
                for k in zs:
                    zmask |= 1 << k
                if _dsep_masks(g, amask, bmask, zmask):
                    out.append((g.nodes[ai], g.nodes[bi], frozenset(g.nodes[k] for k in zs)))
    out.sort(key=lambda t: (t[0], t[1], len(t[2]), sorted(t[2])))
    return tuple(out)


def skeleton_and_vstructures(
    g: Dag,
) -> tuple[frozenset[tuple[str, str]], frozenset[tuple[str, str, str]]]:
    """Undirected edge set plus colliders a→c←b with a, b non-adjacent.

    V-structures are reported as (a, c, b) with a < b lexicographically.
    """
    skel = frozenset(tuple(sorted((g.nodes[i], g.nodes[j]))) for i, j in g.edges)
    vs = set()
    for c in range(g.n):
        for ai, bi in itertools.combinations(sorted(_bits(g._parent_masks[c])), 2):
            if not g.adjacent(ai, bi):
                a, b = sorted((g.nodes[ai], g.nodes[bi]))
                vs.add((a, g.nodes[c], b))
    return skel, frozenset(vs)


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    """Same skeleton and same v-structures."""
    if set(g1.nodes) != set(g2.nodes):
        raise UsageError("graphs are over different node sets")
    return skeleton_and_vstructures(g1) == skeleton_and_vstructures(g2)


# ---------------------------------------------------------------------------
# Meek orientation rules


def meek_closure(
    n: int,
    directed: set[tuple[int, int]],
    undirected: set[tuple[int, int]],
) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Close a partially directed graph under the four orientation rules.

    Operates on index pairs; undirected pairs are stored as (min, max).
    An orientation that would close a directed cycle is skipped with a
    warning (possible only for inconsistent finite-sample inputs).
    """
    directed = set(directed)
    undirected = {tuple(sorted(e)) for e in undirected}

    def adjacent(i, j):
        return (
            (i, j) in directed
            or (j, i) in directed
            or tuple(sorted((i, j))) in undirected
        )

    def creates_cycle(i, j):
        # would j -> ... -> i exist in the directed part?
        stack, seen = [j], set()
        while stack:
            k = stack.pop()
            if k == i:
                return True
            if k in seen:
                continue
            seen.add(k)
            stack.extend(c for (p, c) in directed if p == k)
        return False

    def orient(i, j):
        pair = tuple(sorted((i, j)))
        if pair not in undirected:
            return False
        if creates_cycle(i, j):
            logger.warning(
                "skipping orientation %s->%s: would close a directed cycle", i, j
            )
            return False
        undirected.discard(pair)
        directed.add((i, j))
        return True

    changed = True
    while changed:
        changed = False
        # R1: a -> b, b - c, a and c non-adjacent  =>  b -> c
        for a, b in sorted(directed):
            for pair in sorted(undirected):
                if b in pair:
                    c = pair[0] if pair[1] == b else pair[1]
                    if c != a and not adjacent(a, c):
                        changed |= orient(b, c)
        # R2: a -> c -> b, a - b  =>  a -> b
        for pair in sorted(undirected):
            for a, b in (pair, pair[::-1]):
                if any((a, c) in directed and (c, b) in directed for c in range(n)):
                    changed |= orient(a, b)
                    break
        # R3: a - b; a - c, a - d; c -> b, d -> b; c, d non-adjacent  =>  a -> b
        for pair in sorted(undirected):
            for a, b in (pair, pair[::-1]):
                cands = [
                    c
                    for c in range(n)
                    if tuple(sorted((a, c))) in undirected and (c, b) in directed
                ]
                if any(
                    not adjacent(c, d)
                    for c, d in itertools.combinations(sorted(cands), 2)
                ):
                    changed |= orient(a, b)
                    break
        # R4: a - b; a - d; d -> c, c -> b; b, d non-adjacent; a, c adjacent  =>  a -> b
        for pair in sorted(undirected):
            for a, b in (pair, pair[::-1]):
                hit = False
                for d, c in sorted(directed):
                    if (
                        (c, b) in directed
                        and tuple(sorted((a, d))) in undirected
                        and not adjacent(b, d)
                        and adjacent(a, c)
                    ):
                        hit = orient(a, b)
                        break
                if hit:
                    changed = True
                    break
    return directed, undirected


def cpdag_of(g: Dag) -> Cpdag:
    """Essential graph of g: v-structure orientations closed under Meek rules."""
    skel, vs = skeleton_and_vstructures(g)
    directed = set()
    for a, c, b in vs:
        directed.add((g.index(a), g.index(c)))
        directed.add((g.index(b), g.index(c)))
    undirected = {
        (g.index(u), g.index(v))
        for u, v in skel
        if (g.index(u), g.index(v)) not in directed
        and (g.index(v), g.index(u)) not in directed
    }
    directed, undirected = meek_closure(g.n, directed, undirected)
    return Cpdag(
        nodes=g.nodes,
        directed=frozenset((g.nodes[i], g.nodes[j]) for i, j in directed),
        undirected=frozenset(
            tuple(sorted((g.nodes[i], g.nodes[j]))) for i, j in undirected
        ),
    )


# ---------------------------------------------------------------------------
# Covariate adjustment


def _adjustment_context(g: Dag, t: int, y: int) -> tuple[int, Dag]:
    """Forbidden-node mask and the graph with t's causal first edges cut."""
    tmask = 1 << t
    de_t = g.descendants_mask(t)
    cn = 0
    for v in _bits(de_t & ~tmask):
        if g.descendants_mask(v) & (1 << y):
            cn |= 1 << v
    forbidden = 0
    for v in _bits(cn):
        forbidden |= g.descendants_mask(v)
    cut = [(t, c) for c in g.children(t) if cn & (1 << c)]
    return forbidden, g.remove_edges(cut)


def is_valid_adjustment_set(
    g: Dag, t: str | int, y: str | int, z: Iterable[str | int]
) -> bool:
    """Whether summing p(z)p(y|t,z) over z yields the interventional law.

    Two graphical conditions for a singleton treatment: z avoids every
    descendant of a node on a directed t→y path (other than t itself),
    and z blocks every non-directed path from t to y.
    """
    ti, yi = g.index(t), g.index(y)
    if ti == yi:
        raise UsageError("treatment and outcome must differ")
    zmask = g.mask(z)
    if zmask & ((1 << ti) | (1 << yi)):
        raise UsageError("adjustment set must exclude treatment and outcome")
    forbidden, g_cut = _adjustment_context(g, ti, yi)
    if zmask & forbidden:
        return False
    return _dsep_masks(g_cut, 1 << ti, 1 << yi, zmask)


@dataclass(frozen=True)
class AdjustmentSets:
    """All valid adjustment sets, plus whether parent adjustment is one."""

    sets: tuple[frozenset[str], ...]
    parent_set: frozenset[str]
    parent_set_valid: bool


def enumerate_adjustment_sets(
    g: Dag, t: str | int, y: str | int, limit: int = DEFAULT_ADJUSTMENT_LIMIT
) -> AdjustmentSets:
    """Every z ⊆ nodes∖{t,y} passing the adjustment criterion.

    Sorted by size, then lexicographically by node names. The treatment's
    parent set is flagged separately (parent adjustment).
    """
    if g.n > limit:
        raise UsageError(f"graph has {g.n} nodes, enumeration limit is {limit}")
    ti, yi = g.index(t), g.index(y)
    if ti == yi:
        raise UsageError("treatment and outcome must differ")
    forbidden, g_cut = _adjustment_context(g, ti, yi)
    others = [k for k in range(g.n) if k not in (ti, yi)]
    found = []
    for r in range(len(others) + 1):
        for zs in itertools.combinations(others, r):
            zmask = 0
            for k in zs:
                zmask |= 1 << k
            if zmask & forbidden:
                continue
            if _dsep_masks(g_cut, 1 << ti, 1 << yi, zmask):
                found.append(frozenset(g.nodes[k] for k in zs))
    found.sort(key=lambda s: (len(s), sorted(s)))
    parent_set = frozenset(g.nodes[p] for p in g.parents(ti))
    return AdjustmentSets(
        sets=tuple(found),
        parent_set=parent_set,
        parent_set_valid=parent_set in found,
    )


# ---------------------------------------------------------------------------
# Enumeration and counting


def count_dags(n: int) -> int:
    """Number of labeled DAGs on n nodes (alternating sum over root sets)."""
    if n < 1:
        raise UsageError("n must be >= 1")
    a = [1]  # a[0] = 1
    binom = [[1]]
    for m in range(1, n + 1):
        row = [1] + [binom[m - 1][k - 1] + binom[m - 1][k] for k in range(1, m)] + [1]
        binom.append(row)
        total = 0
        for k in range(1, m + 1):
            term = binom[m][k] * (1 << (k * (m - k))) * a[m - k]
            total += term if k % 2 == 1 else -term
        a.append(total)
    return a[n]


def enumerate_dags(nodes: Sequence[str]) -> Iterator[Dag]:
    """All labeled DAGs on the given nodes, in a fixed deterministic order.

    Iterates the 3^(n choose 2) orientation assignments per node pair and
    keeps the acyclic ones; intended for desk-scale exhaustive sweeps.
    """
    nodes = tuple(nodes)
    n = len(nodes)
    pairs = list(itertools.combinations(range(n), 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (i, j), s in zip(pairs, states):
            if s == 1:
                edges.append((i, j))
            elif s == 2:
                edges.append((j, i))
        pmask = [0] * n
        for i, j in edges:
            pmask[j] |= 1 << i
        if _topological_or_none(n, pmask) is None:
            continue
        yield Dag(nodes, edges)


# ---------------------------------------------------------------------------
# JSON serialization


def dag_to_json(g: Dag) -> str:
    payload = {
        "nodes": list(g.nodes),
        "edges": sorted([g.nodes[i], g.nodes[j]] for i, j in g.edges),
    }
    return json.dumps(payload, sort_keys=True)


def dag_from_json(text: str) -> Dag:
    try:
        payload = json.loads(text)
        nodes = payload["nodes"]
        edges = [tuple(e) for e in payload.get("edges", [])]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad graph JSON: {exc}") from exc
    return Dag(nodes, edges)


def cpdag_to_json(c: Cpdag) -> str:
    payload = {
        "nodes": list(c.nodes),
        "edges": sorted(list(e) for e in c.directed),
        "undirected_edges": sorted(list(e) for e in c.undirected),
    }
    return json.dumps(payload, sort_keys=True)


def cpdag_from_json(text: str) -> Cpdag:
    try:
        payload = json.loads(text)
        return Cpdag(
            nodes=tuple(payload["nodes"]),
            directed=frozenset(tuple(e) for e in payload.get("edges", [])),
            undirected=frozenset(tuple(e) for e in payload.get("undirected_edges", [])),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad CPDAG JSON: {exc}") from exc
