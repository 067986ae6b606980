"""Causal structure learning.

Constraint-based skeletons (exhaustive-subset and neighbor-restricted
variants), v-structure orientation with rule closure, BIC scoring with
exhaustive or greedy search, and bivariate direction inference under an
additive-noise assumption.

Edge-removal sweeps are deterministic: candidate conditioning sets are
visited in (size, lexicographic) order against adjacency sets frozen per
sweep, so results do not depend on evaluation order.
"""

from __future__ import annotations

import itertools
import logging
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import PreconditionError, UsageError
from .graph import Cpdag, Dag, enumerate_dags, meek_closure
from .kernels import ci_test, hsic_test, kernel_ridge_fit
from . import graph as graph_mod

logger = logging.getLogger(__name__)

MAX_SGS_NODES = 8
MAX_EXHAUSTIVE_NODES = 5


@dataclass(frozen=True)
class DiscoveryConfig:
    ci_method: str = "partial-correlation"  # | "kernel-residual" | "oracle"
    alpha: float = 0.05
    max_cond_size: int = 4
    score: str = "multinomial"  # | "linear-gaussian"
    search: str = "exhaustive"  # | "greedy"
    perms: int = 200
    seed: int = 0
    oracle_graph: Dag | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise UsageError("alpha must lie in (0, 1)")
        if self.ci_method == "oracle" and self.oracle_graph is None:
            raise UsageError("oracle CI mode requires oracle_graph")


@dataclass(frozen=True)
class SkeletonResult:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    sepsets: dict
    tests_performed: int


def _decision_fn(data: Dataset | None, cfg: DiscoveryConfig, nodes: tuple[str, ...]):
    """Return f(i, j, zs) -> True iff independent, over node indices."""
    if cfg.ci_method == "oracle":
        g = cfg.oracle_graph
        if set(g.nodes) != set(nodes):
            raise UsageError("oracle graph nodes do not match the variables")
        remap = tuple(g.index(name) for name in nodes)

        def oracle(i, j, zs):
            zmask = 0
            for k in zs:
                zmask |= 1 << remap[k]
            return graph_mod._dsep_masks(g, 1 << remap[i], 1 << remap[j], zmask)

        return oracle

    if data is None:
        raise UsageError("data required unless using the oracle CI mode")

    def tester(i, j, zs):
        res = ci_test(
            cfg.ci_method,
            data,
            nodes[i],
            nodes[j],
            tuple(nodes[k] for k in zs),
            alpha=cfg.alpha,
            perms=cfg.perms,
            seed=cfg.seed,
            max_cond=max(cfg.max_cond_size, len(zs)),
        )
        return res.p_value > cfg.alpha

    return tester


def sgs_skeleton(data: Dataset | None, cfg: DiscoveryConfig) -> SkeletonResult:
    """Exhaustive-subset skeleton: drop an edge iff some subset separates."""
    nodes = cfg.oracle_graph.nodes if data is None else data.columns
    n = len(nodes)
    if n > MAX_SGS_NODES:
        raise UsageError(f"{n} variables exceed the exhaustive limit {MAX_SGS_NODES}")
    independent = _decision_fn(data, cfg, nodes)
    edges = set()
    sepsets = {}
    tests = 0
    for i, j in itertools.combinations(range(n), 2):
        rest = [k for k in range(n) if k not in (i, j)]
        found = None
        for size in range(min(len(rest), cfg.max_cond_size if data is not None else len(rest)) + 1):
            for zs in itertools.combinations(rest, size):
                tests += 1
                if independent(i, j, zs):
                    found = zs
                    break
            if found is not None:
                break
        if found is None:
            edges.add((nodes[i], nodes[j]))
        else:
            sepsets[(nodes[i], nodes[j])] = frozenset(nodes[k] for k in found)
    return SkeletonResult(
        nodes=tuple(nodes),
        edges=frozenset(edges),
        sepsets=sepsets,
        tests_performed=tests,
    )


def pc_skeleton(data: Dataset | None, cfg: DiscoveryConfig) -> SkeletonResult:
    """Neighbor-restricted skeleton search with per-sweep frozen adjacencies."""
    nodes = cfg.oracle_graph.nodes if data is None else data.columns
    n = len(nodes)
    independent = _decision_fn(data, cfg, nodes)
    adj = {i: set(range(n)) - {i} for i in range(n)}
    sepsets = {}
    tests = 0
    size = 0
    max_size = cfg.max_cond_size if data is not None else n - 2
    while size <= max_size:
        snapshot = {i: sorted(adj[i]) for i in range(n)}
        if all(len(snapshot[i]) - 1 < size for i in range(n)):
            break
        removals = []
        for i, j in itertools.combinations(range(n), 2):
            if j not in adj[i]:
                continue
            found = None
            candidate_pools = []
            if len(snapshot[i]) - 1 >= size:
                candidate_pools.append([k for k in snapshot[i] if k != j])
            if len(snapshot[j]) - 1 >= size:
                candidate_pools.append([k for k in snapshot[j] if k != i])
            seen = set()
            for pool in candidate_pools:
                for zs in itertools.combinations(pool, size):
                    if zs in seen:
                        continue
                    seen.add(zs)
                    tests += 1
                    if independent(i, j, zs):
                        found = zs
                        break
                if found is not None:
                    break
            if found is not None:
                removals.append((i, j, found))
        for i, j, zs in removals:
            adj[i].discard(j)
            adj[j].discard(i)
            sepsets[(nodes[i], nodes[j])] = frozenset(nodes[k] for k in zs)
        size += 1
    edges = frozenset(
        (nodes[i], nodes[j]) for i, j in itertools.combinations(range(n), 2) if j in adj[i]
    )
    return SkeletonResult(
        nodes=tuple(nodes), edges=edges, sepsets=sepsets, tests_performed=tests
    )


def orient(skeleton: SkeletonResult) -> Cpdag:
    """V-structures from separating sets, then rule closure.

    Finite-sample conflicts (a later v-structure trying to flip an
    already-oriented edge) resolve first-found-wins with a warning.
    """
    nodes = skeleton.nodes
    n = len(nodes)
    index = {name: k for k, name in enumerate(nodes)}
    adj = {i: set() for i in range(n)}
    for u, v in skeleton.edges:
        adj[index[u]].add(index[v])
        adj[index[v]].add(index[u])

    def sepset(i, j):
        a, b = (nodes[i], nodes[j]) if i < j else (nodes[j], nodes[i])
        return skeleton.sepsets.get((a, b), frozenset())

    directed: set[tuple[int, int]] = set()
    for a, b in itertools.combinations(range(n), 2):
        if b in adj[a]:
            continue
        for c in sorted(adj[a] & adj[b]):
            if nodes[c] in sepset(a, b):
                continue
            for tail in (a, b):
                if (c, tail) in directed:
                    logger.warning(
                        "orientation conflict at %s->%s<-%s: keeping earlier %s->%s",
                        nodes[a], nodes[c], nodes[b], nodes[c], nodes[tail],
                    )
                else:
                    directed.add((tail, c))
    undirected = {
        (index[u], index[v])
        for u, v in skeleton.edges
        if (index[u], index[v]) not in directed and (index[v], index[u]) not in directed
    }
    directed, undirected = meek_closure(n, directed, undirected)
    return Cpdag(
        nodes=tuple(nodes),
        directed=frozenset((nodes[i], nodes[j]) for i, j in directed),
        undirected=frozenset(
            tuple(sorted((nodes[i], nodes[j]))) for i, j in undirected
        ),
    )


# ---------------------------------------------------------------------------
# Score-based search


def _family_loglik_multinomial(columns, child, parents):
    """Maximized log-likelihood and parameter count of one conditional."""
    child_vals, child_idx = np.unique(columns[child], return_inverse=True)
    r = len(child_vals)
    if parents:
        pattern = np.column_stack([columns[p] for p in parents])
        pa_vals, pa_idx = np.unique(pattern, axis=0, return_inverse=True)
        q = len(pa_vals)
        q_full = 1
        for p in parents:
            q_full *= len(np.unique(columns[p]))
    else:
        pa_idx = np.zeros(len(child_idx), dtype=int)
        q = q_full = 1
    counts = np.zeros((q, r))
    np.add.at(counts, (pa_idx, child_idx), 1.0)
    row_tot = counts.sum(axis=1, keepdims=True)
    mask = counts > 0
    ll = float((counts[mask] * np.log(counts[mask] / row_tot.repeat(r, 1)[mask])).sum())
    return ll, (r - 1) * q_full


def _family_loglik_gaussian(columns, child, parents):
    yv = columns[child]
    m = len(yv)
    design = np.column_stack([np.ones(m)] + [columns[p] for p in parents])
    beta, *_ = np.linalg.lstsq(design, yv, rcond=None)
    resid = yv - design @ beta
    sigma2 = float(resid @ resid) / m
    sigma2 = max(sigma2, 1e-300)
    ll = -0.5 * m * (math.log(2.0 * math.pi * sigma2) + 1.0)
    return ll, len(parents) + 2


def bic_score(data: Dataset, g: Dag, model: str = "multinomial") -> float:
    """Penalized maximum likelihood: log p(D | G, MLE) - (k/2) log m."""
    if data.n == 0:
        raise UsageError("empty dataset")
    if set(g.nodes) - set(data.columns):
        raise UsageError("graph references columns missing from the data")
    columns = {v: data.column(v).astype(float) for v in g.nodes}
    if model == "multinomial":
        if any(data.kinds[v] == "real" for v in g.nodes):
            raise UsageError("multinomial score requires discrete columns")
        family = _family_loglik_multinomial
    elif model == "linear-gaussian":
        family = _family_loglik_gaussian
    else:
        raise UsageError(f"unknown score model {model!r}")
    ll = 0.0
    k = 0
    for v in g.nodes:
        parents = tuple(g.nodes[p] for p in g.parents(v))
        fll, fk = family(columns, v, parents)
        ll += fll
        k += fk
    return ll - 0.5 * k * math.log(data.n)


@dataclass(frozen=True)
class ScoreSearchResult:
    dag: Dag
    score: float
    graphs_scored: int


def score_search(data: Dataset, cfg: DiscoveryConfig) -> ScoreSearchResult:
    """Best-scoring DAG, by full enumeration or greedy single-edge moves."""
    nodes = data.columns
    model = cfg.score
    if cfg.search == "exhaustive":
        if len(nodes) > MAX_EXHAUSTIVE_NODES:
            raise UsageError(
                f"{len(nodes)} variables exceed the exhaustive limit {MAX_EXHAUSTIVE_NODES}"
            )
        best = None
        best_score = -math.inf
        count = 0
        candidates = []
        for g in enumerate_dags(nodes):
            s = bic_score(data, g, model)
            count += 1
            candidates.append((s, g))
            best_score = max(best_score, s)
        tied = [
            (len(g.edges), sorted((g.nodes[i], g.nodes[j]) for i, j in g.edges), g, s)
            for s, g in candidates
            if s >= best_score - 1e-9
        ]
        tied.sort(key=lambda t: (t[0], t[1]))
        best, score = tied[0][2], tied[0][3]
        return ScoreSearchResult(dag=best, score=score, graphs_scored=count)
    if cfg.search != "greedy":
        raise UsageError(f"unknown search mode {cfg.search!r}")
    return _greedy_search(data, nodes, model)


def _greedy_search(data: Dataset, nodes, model) -> ScoreSearchResult:
    columns = {v: data.column(v).astype(float) for v in nodes}
    if model == "multinomial":
        if any(data.kinds[v] == "real" for v in nodes):
            raise UsageError("multinomial score requires discrete columns")
        family = _family_loglik_multinomial
    else:
        family = _family_loglik_gaussian
    logm = math.log(data.n)
    cache: dict[tuple[str, tuple[str, ...]], float] = {}

    def local(child, parents):
        key = (child, tuple(sorted(parents)))
        if key not in cache:
            ll, k = family(columns, child, key[1])
            cache[key] = ll - 0.5 * k * logm
        return cache[key]

    n = len(nodes)
    parent_sets = {v: set() for v in nodes}
    scored = 0

    def acyclic_with(edge_changes):
        edges = set()
        for v in nodes:
            for p in parent_sets[v]:
                edges.add((p, v))
        for op, (u, v) in edge_changes:
            if op == "add":
                edges.add((u, v))
            elif op == "del":
                edges.discard((u, v))
        try:
            Dag(nodes, edges)
            return True
        except UsageError:
            return False

    op_rank = {"add": 0, "del": 1, "rev": 2}

    def scan_moves():
        nonlocal scored
        moves = []
        for u, v in itertools.permutations(nodes, 2):
            if u in parent_sets[v]:
                gain = local(v, parent_sets[v] - {u}) - local(v, parent_sets[v])
                scored += 1
                moves.append((gain, ("del", u, v)))
                if v not in parent_sets[u] and acyclic_with(
                    [("del", (u, v)), ("add", (v, u))]
                ):
                    gain = (
                        local(v, parent_sets[v] - {u})
                        + local(u, parent_sets[u] | {v})
                        - local(v, parent_sets[v])
                        - local(u, parent_sets[u])
                    )
                    scored += 1
                    moves.append((gain, ("rev", u, v)))
            elif v not in parent_sets[u] and u not in parent_sets[v]:
                if acyclic_with([("add", (u, v))]):
                    gain = local(v, parent_sets[v] | {u}) - local(v, parent_sets[v])
                    scored += 1
                    moves.append((gain, ("add", u, v)))
        return moves

    def apply(op, u, v):
        if op == "add":
            parent_sets[v].add(u)
        elif op == "del":
            parent_sets[v].discard(u)
        else:
            parent_sets[v].discard(u)
            parent_sets[u].add(v)

    def best_strict(moves):
        best_gain = max((g for g, _ in moves), default=-math.inf)
        if best_gain <= 1e-12:
            return None
        # near-ties (score-equivalent orientations) resolve lexicographically
        tied = [mv for g, mv in moves if g >= best_gain - 1e-6]
        tied.sort(key=lambda mv: (op_rank[mv[0]], mv[1], mv[2]))
        return tied[0]

    while True:
        move = best_strict(scan_moves())
        if move is not None:
            apply(*move)
            continue
        # plateau: a score-preserving reversal (covered edge) may unlock a
        # strictly improving deletion; accept it only when it does
        escaped = False
        plateau = sorted(
            (mv for g, mv in scan_moves() if mv[0] == "rev" and abs(g) <= 1e-6),
            key=lambda mv: (mv[1], mv[2]),
        )
        for _, u, v in plateau:
            apply("rev", u, v)
            if best_strict(scan_moves()) is not None:
                escaped = True
                break
            apply("rev", v, u)  # revert
        if not escaped:
            break
    edges = [(p, v) for v in nodes for p in parent_sets[v]]
    g = Dag(nodes, edges)
    total = sum(local(v, parent_sets[v]) for v in nodes)
    return ScoreSearchResult(dag=g, score=total, graphs_scored=scored)


# ---------------------------------------------------------------------------
# Bivariate additive-noise direction inference


@dataclass(frozen=True)
class AnmVerdict:
    direction: str  # "forward" | "backward" | "undecided"
    p_forward: float
    p_backward: float
    margin: float


MIN_ANM_SAMPLES = 100
ANM_HSIC_CAP = 500  # the regression uses all rows; the O(m^2) test stage is capped


def _direction_seed(seed: int, cause: str, effect: str) -> int:
    ss = np.random.SeedSequence(
        [seed, zlib.crc32(cause.encode()), zlib.crc32(effect.encode())]
    )
    return int(ss.generate_state(1)[0])


def _residual_independence_p(xv, yv, cfg: DiscoveryConfig, seed: int) -> float:
    fit = kernel_ridge_fit(xv, yv)
    resid = yv - fit.predict(xv)
    if len(xv) > ANM_HSIC_CAP:
        stride = np.linspace(0, len(xv) - 1, ANM_HSIC_CAP).astype(int)
        xv, resid = xv[stride], resid[stride]
    res = hsic_test(None, None, xv, resid, perms=cfg.perms, seed=seed)
    return res.p_value


def anm_direction(
    data: Dataset, x: str, y: str, cfg: DiscoveryConfig
) -> AnmVerdict:
    """Fit y ~ f(x) and x ~ g(y) nonparametrically, test residuals.

    A direction wins only when its residuals look independent of the
    input while the reverse direction's do not; otherwise the verdict is
    undecided (both fitting, as in the linear-Gaussian exception, or
    neither fitting).
    """
    xv = data.column(x).astype(float)
    yv = data.column(y).astype(float)
    if len(xv) < MIN_ANM_SAMPLES:
        raise UsageError(f"need at least {MIN_ANM_SAMPLES} rows")
    if np.std(xv) == 0 or np.std(yv) == 0:
        raise UsageError("degenerate constant column")
    p_fwd = _residual_independence_p(xv, yv, cfg, _direction_seed(cfg.seed, x, y))
    p_bwd = _residual_independence_p(yv, xv, cfg, _direction_seed(cfg.seed, y, x))
    pass_fwd = p_fwd > cfg.alpha
    pass_bwd = p_bwd > cfg.alpha
    if pass_fwd and not pass_bwd:
        direction = "forward"
    elif pass_bwd and not pass_fwd:
        direction = "backward"
    else:
        direction = "undecided"
    return AnmVerdict(
        direction=direction,
        p_forward=p_fwd,
        p_backward=p_bwd,
        margin=abs(p_fwd - p_bwd),
    )
