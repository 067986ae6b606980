"""Exact inference in discrete causal graphical models.

Everything here is exact enumeration over the product state space (with
a hard cap), because this module doubles as the oracle layer for the
rest of the repository: interventional truths, adjustment identities and
conditional mutual information are all computed to float precision, not
approximated.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .errors import OverlapError, PreconditionError, UsageError
from .graph import Dag, topological_order
from .scm import (
    DiracNoise,
    FiniteNoise,
    Intervention,
    Scm,
    Table,
    _eval_scalar_with_noise,
    induced_graph,
)

DEFAULT_STATE_LIMIT = 1 << 22
_ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Cpt:
    """p(child | parents) as an array of shape (*parent sizes, child size)."""

    child: str
    parents: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", arr)
        rows = arr.reshape(-1, arr.shape[-1])
        if (rows < 0).any():
            raise UsageError(f"CPT for {self.child!r} has negative entries")
        bad = np.abs(rows.sum(axis=1) - 1.0) > _ROW_TOL
        if bad.any():
            raise UsageError(
                f"CPT for {self.child!r}: {int(bad.sum())} rows do not sum to 1"
            )
        arr.setflags(write=False)

    @classmethod
    def from_rows(
        cls,
        child: str,
        parents: Sequence[str],
        parent_domains: Sequence[Sequence],
        child_domain: Sequence,
        rows: Mapping[tuple, Sequence[float]],
    ) -> "Cpt":
        """Build from a map: parent value tuple -> distribution over child."""
        sizes = [len(d) for d in parent_domains]
        arr = np.empty((*sizes, len(child_domain)))
        for config in itertools.product(*(range(s) for s in sizes)):
            key = tuple(parent_domains[k][i] for k, i in enumerate(config))
            if key not in rows:
                raise UsageError(f"CPT for {child!r} missing row for parents {key!r}")
            arr[config] = rows[key]
        return cls(child=child, parents=tuple(parents), values=arr)


@dataclass(frozen=True, eq=False)
class DiscreteCgm:
    dag: Dag
    domains: Mapping[str, tuple]
    cpts: Mapping[str, Cpt]

    def __post_init__(self):
        object.__setattr__(
            self, "domains", {k: tuple(v) for k, v in self.domains.items()}
        )
        names = set(self.dag.nodes)
        if set(self.domains) != names or set(self.cpts) != names:
            raise UsageError("domains/cpts must cover exactly the graph nodes")
        for name in self.dag.nodes:
            cpt = self.cpts[name]
            want = tuple(self.dag.nodes[p] for p in self.dag.parents(name))
            if cpt.parents != want:
                raise UsageError(
                    f"CPT for {name!r} lists parents {cpt.parents}, graph says {want}"
                )
            shape = tuple(len(self.domains[p]) for p in want) + (
                len(self.domains[name]),
            )
            if cpt.values.shape != shape:
                raise UsageError(
                    f"CPT for {name!r} has shape {cpt.values.shape}, expected {shape}"
                )

    def domain(self, name: str) -> tuple:
        if name not in self.domains:
            raise UsageError(f"unknown variable {name!r}")
        return self.domains[name]

    def value_index(self, name: str, value) -> int:
        dom = self.domain(name)
        for i, v in enumerate(dom):
            if v == value or (
                isinstance(v, (int, float))
                and isinstance(value, (int, float))
                and float(v) == float(value)
            ):
                return i
        raise UsageError(f"value {value!r} not in domain of {name!r}: {dom}")

    def state_space_size(self) -> int:
        return math.prod(len(self.domains[v]) for v in self.dag.nodes)


@dataclass(frozen=True, eq=False)
class Factor:
    """Non-negative table over the product domain of its scope."""

    scope: tuple[str, ...]
    domains: tuple[tuple, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != tuple(len(d) for d in self.domains):
            raise UsageError("factor shape does not match its domains")
        if (arr < -1e-15).any():
            raise UsageError("factor has negative entries")
        object.__setattr__(self, "values", arr)
        arr.setflags(write=False)

    def marginal(self, keep: Sequence[str]) -> "Factor":
        keep = list(keep)
        drop_axes = tuple(i for i, v in enumerate(self.scope) if v not in keep)
        summed = self.values.sum(axis=drop_axes) if drop_axes else self.values
        remaining = [v for v in self.scope if v in keep]
        order = [remaining.index(v) for v in keep]
        return Factor(
            scope=tuple(keep),
            domains=tuple(self.domains[self.scope.index(v)] for v in keep),
            values=np.ascontiguousarray(np.transpose(summed, order)),
        )

    def total(self) -> float:
        return float(self.values.sum())


def _check_limit(m: DiscreteCgm, limit: int) -> None:
    size = m.state_space_size()
    if size > limit:
        raise UsageError(f"state space {size} exceeds limit {limit}")


def _broadcast_cpt(m: DiscreteCgm, name: str, delta_value=None) -> np.ndarray:
    """CPT (or intervention delta) reshaped over the full variable order."""
    nodes = m.dag.nodes
    if delta_value is None:
        cpt = m.cpts[name]
        axes_vars = list(cpt.parents) + [name]
        arr = cpt.values
    else:
        axes_vars = [name]
        arr = np.zeros(len(m.domains[name]))
        arr[m.value_index(name, delta_value)] = 1.0
    shape = [1] * len(nodes)
    src_order = sorted(range(len(axes_vars)), key=lambda k: nodes.index(axes_vars[k]))
    arr = np.transpose(arr, src_order)
    for v in axes_vars:
        shape[nodes.index(v)] = len(m.domains[v])
    return arr.reshape(shape)


def joint(m: DiscreteCgm, limit: int = DEFAULT_STATE_LIMIT) -> Factor:
    """Exact product of the per-variable conditionals, over all variables."""
    _check_limit(m, limit)
    nodes = m.dag.nodes
    out = np.ones(tuple(len(m.domains[v]) for v in nodes))
    for name in nodes:
        out = out * _broadcast_cpt(m, name)
    return Factor(
        scope=nodes, domains=tuple(m.domains[v] for v in nodes), values=out
    )


def truncated_factorization(
    m: DiscreteCgm, i: Intervention | Mapping, limit: int = DEFAULT_STATE_LIMIT
) -> Factor:
    """Interventional joint: deltas at targets times untouched conditionals."""
    _check_limit(m, limit)
    assignments = i.assignments if isinstance(i, Intervention) else dict(i)
    for name in assignments:
        m.domain(name)  # raises for unknown variables
    nodes = m.dag.nodes
    out = np.ones(tuple(len(m.domains[v]) for v in nodes))
    for name in nodes:
        if name in assignments:
            out = out * _broadcast_cpt(m, name, delta_value=assignments[name])
        else:
            out = out * _broadcast_cpt(m, name)
    return Factor(
        scope=nodes, domains=tuple(m.domains[v] for v in nodes), values=out
    )


def condition(
    m: DiscreteCgm,
    query: str,
    given: Mapping,
    limit: int = DEFAULT_STATE_LIMIT,
) -> np.ndarray:
    """Exact p(query | given) as a vector over the query domain.

    The query may itself appear in the evidence; the result is then an
    indicator vector (provided the evidence has positive probability).
    """
    m.domain(query)
    f = joint(m, limit)
    keep = [query] + [v for v in m.dag.nodes if v in given and v != query]
    marg = f.marginal(keep)
    index = [slice(None)] + [
        m.value_index(v, given[v]) for v in keep[1:]
    ]
    slice_vals = marg.values[tuple(index)]
    if query in given:
        qi = m.value_index(query, given[query])
        if slice_vals[qi] <= 0:
            raise UsageError(f"evidence {dict(given)!r} has probability zero")
        out = np.zeros_like(slice_vals)
        out[qi] = 1.0
        return out
    total = slice_vals.sum()
    if total <= 0:
        raise UsageError(f"evidence {dict(given)!r} has probability zero")
    return slice_vals / total


def interventional_marginal(
    m: DiscreteCgm, target: str, i: Intervention | Mapping, limit: int = DEFAULT_STATE_LIMIT
) -> np.ndarray:
    """p(target | do(i)) over the target domain, by the interventional joint."""
    f = truncated_factorization(m, i, limit)
    return f.marginal([target]).values


def adjustment_formula(
    m: DiscreteCgm,
    t: str,
    y: str,
    z: Iterable[str],
    limit: int = DEFAULT_STATE_LIMIT,
) -> dict:
    """Sum over z of p(z) p(y | t, z), exactly, for each treatment value.

    Raises OverlapError (with the offending stratum) when a positive-mass
    z stratum never receives some treatment value.
    """
    z = sorted(set(z))
    if t in z or y in z:
        raise UsageError("adjustment set must exclude treatment and outcome")
    f = joint(m, limit)
    scope = [t] + z + [y]
    marg = f.marginal(scope).values  # axes: t, *z, y
    pz = marg.sum(axis=(0, -1))  # over z axes
    out = {}
    for ti, tval in enumerate(m.domain(t)):
        tyz = marg[ti]  # axes: *z, y
        ptz = tyz.sum(axis=-1)
        if z:
            positive = pz > 0
            lacking = positive & (ptz <= 0)
            if lacking.any():
                config = np.argwhere(lacking)[0]
                stratum = {
                    var: m.domain(var)[k] for var, k in zip(z, config)
                }
                raise OverlapError(
                    f"no mass for {t}={tval!r} in stratum {stratum!r}",
                    stratum={"treatment_value": tval, "stratum": stratum},
                )
            cond = np.zeros_like(tyz)
            cond[positive] = tyz[positive] / ptz[positive][..., None]
            weights = np.zeros_like(pz)
            weights[positive] = pz[positive]
            result = np.tensordot(weights, cond, axes=(tuple(range(weights.ndim)), tuple(range(weights.ndim))))
        else:
            total = ptz if np.ndim(ptz) == 0 else float(ptz)
            if total <= 0:
                raise OverlapError(
                    f"no mass for {t}={tval!r}",
                    stratum={"treatment_value": tval, "stratum": {}},
                )
            result = tyz / total
        out[tval] = np.asarray(result, dtype=float)
    return out


def front_door_formula(
    m: DiscreteCgm, t: str, mdtr: str, y: str, limit: int = DEFAULT_STATE_LIMIT
) -> dict:
    """Mediator-based identification from the (t, mediator, y) margin only.

    Requires the mediator shape: every directed t->y path passes through
    the mediator, the mediator's only parent is t, and p(t, mediator) is
    strictly positive.
    """
    _check_front_door_shape(m.dag, t, mdtr, y)
    f = joint(m, limit)
    marg = f.marginal([t, mdtr, y]).values  # axes: t, m, y
    ptm = marg.sum(axis=2)
    if (ptm <= 0).any():
        bad = np.argwhere(ptm <= 0)[0]
        raise OverlapError(
            f"p({t}, {mdtr}) = 0 at ({m.domain(t)[bad[0]]!r}, {m.domain(mdtr)[bad[1]]!r})",
            stratum={
                t: m.domain(t)[bad[0]],
                mdtr: m.domain(mdtr)[bad[1]],
            },
        )
    pt = ptm.sum(axis=1)
    p_m_given_t = ptm / pt[:, None]
    p_y_given_mt = marg / ptm[:, :, None]
    # inner sum over t': p(t') p(y | m, t')
    inner = np.einsum("t,tmy->my", pt, p_y_given_mt)
    out = {}
    for ti, tval in enumerate(m.domain(t)):
        out[tval] = np.einsum("m,my->y", p_m_given_t[ti], inner)
    return out


def _check_front_door_shape(g: Dag, t: str, mdtr: str, y: str) -> None:
    ti, mi, yi = g.index(t), g.index(mdtr), g.index(y)
    if len({ti, mi, yi}) != 3:
        raise UsageError("treatment, mediator, outcome must be distinct")
    if set(g.parents(mi)) != {ti}:
        raise PreconditionError(
            f"mediator {mdtr!r} must have exactly the treatment as parent"
        )
    # every directed t->y path passes through the mediator
    reach = {ti}
    stack = [ti]
    while stack:
        k = stack.pop()
        for c in g.children(k):
            if c != mi and c not in reach:
                reach.add(c)
                stack.append(c)
    if yi in reach:
        raise PreconditionError(
            f"directed path from {t!r} to {y!r} avoids the mediator {mdtr!r}"
        )


def cmi(
    m: DiscreteCgm,
    a: str,
    b: str,
    z: Iterable[str] = (),
    limit: int = DEFAULT_STATE_LIMIT,
) -> float:
    """Exact conditional mutual information I(a; b | z) in nats (>= 0)."""
    z = sorted(set(z))
    if a in z or b in z:
        raise UsageError("conditioning set must exclude the tested variables")
    f = joint(m, limit)
    if a == b:
        # I(A; A | Z) is the conditional entropy H(A | Z)
        paz = f.marginal([a] + z).values
        pz = paz.sum(axis=0) if z else paz.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(paz > 0, paz / pz, 1.0)
        val = -float(np.sum(paz * np.log(ratio), where=paz > 0))
        return max(val, 0.0)
    pabz = f.marginal([a, b] + z).values
    paz = pabz.sum(axis=1)
    pbz = pabz.sum(axis=0)
    pz = pabz.sum(axis=(0, 1)) if z else np.asarray(pabz.sum())
    num = pabz * pz[None, None, ...] if z else pabz * pz
    den = paz[:, None, ...] * pbz[None, :, ...]
    mask = pabz > 0
    val = float(np.sum(pabz[mask] * np.log(num[mask] / den[mask])))
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# Builders


def random_cgm(
    dag: Dag,
    rng: np.random.Generator,
    domains: Mapping[str, Sequence] | None = None,
    concentration: float = 1.0,
) -> DiscreteCgm:
    """Random CPTs (Dirichlet rows) on a given graph; binary by default."""
    doms = {
        v: tuple(domains[v]) if domains and v in domains else (0, 1)
        for v in dag.nodes
    }
    cpts = {}
    for v in dag.nodes:
        parent_names = tuple(dag.nodes[p] for p in dag.parents(v))
        sizes = tuple(len(doms[p]) for p in parent_names)
        k = len(doms[v])
        rows = rng.dirichlet(np.full(k, concentration), size=sizes or (1,))
        values = rows.reshape((*sizes, k)) if sizes else rows[0]
        cpts[v] = Cpt(child=v, parents=parent_names, values=values)
    return DiscreteCgm(dag=dag, domains=doms, cpts=cpts)


def cgm_from_scm(m: Scm) -> DiscreteCgm:
    """Exact CPTs for a discrete SCM (tabular/constant mechanisms, finite noise).

    p(x | parents) is obtained by enumerating each variable's noise
    support and accumulating the probability of every output value.
    """
    g = induced_graph(m)
    support: dict[str, tuple] = {}
    for idx in topological_order(g):
        name = m.variables[idx]
        mech = m.mechanisms[name]
        spec = m.noises[name]
        if not spec.enumerable():
            raise UsageError(f"{name!r}: noise is not finitely supported")
        if isinstance(spec, DiracNoise):
            pairs = [(spec.point, 1.0)]
        else:
            assert isinstance(spec, FiniteNoise)
            pairs = list(zip(spec.values, spec.probs))
        parent_doms = [support[p] for p in mech.parents]
        values = set()
        for config in itertools.product(*parent_doms):
            pa = dict(zip(mech.parents, config))
            for u, _ in pairs:
                values.add(_eval_scalar_with_noise(mech.expr, pa, u))
        support[name] = tuple(sorted(values))
    cpts = {}
    for name in m.variables:
        mech = m.mechanisms[name]
        spec = m.noises[name]
        pairs = (
            [(spec.point, 1.0)]
            if isinstance(spec, DiracNoise)
            else list(zip(spec.values, spec.probs))
        )
        parent_names = tuple(m.variables[p] for p in g.parents(name))
        parent_doms = [support[p] for p in parent_names]
        sizes = tuple(len(d) for d in parent_doms)
        arr = np.zeros((*sizes, len(support[name])))
        out_index = {v: i for i, v in enumerate(support[name])}
        for config_idx in itertools.product(*(range(s) for s in sizes)):
            pa = {
                p: parent_doms[k][i] for k, (p, i) in enumerate(zip(parent_names, config_idx))
            }
            for u, prob in pairs:
                out = _eval_scalar_with_noise(mech.expr, pa, u)
                arr[config_idx + (out_index[out],)] += prob
        cpts[name] = Cpt(child=name, parents=parent_names, values=arr)
    return DiscreteCgm(dag=g, domains=support, cpts=cpts)


def sample_cgm(m: DiscreteCgm, n: int, seed: int) -> Dataset:
    """Ancestral sampling from the CPTs; one stream per variable."""
    root = np.random.SeedSequence(seed)
    streams = {
        name: np.random.Generator(np.random.Philox(child))
        for name, child in zip(m.dag.nodes, root.spawn(len(m.dag.nodes)))
    }
    idx: dict[str, np.ndarray] = {}
    for i in topological_order(m.dag):
        name = m.dag.nodes[i]
        cpt = m.cpts[name]
        k = len(m.domains[name])
        u = streams[name].random(n)
        if cpt.parents:
            parent_idx = tuple(idx[p] for p in cpt.parents)
            probs = cpt.values[parent_idx]  # (n, k)
        else:
            probs = np.broadcast_to(cpt.values, (n, k))
        cum = np.cumsum(probs, axis=1)
        idx[name] = (u[:, None] > cum).sum(axis=1).clip(0, k - 1)
    cols = {}
    for name in m.dag.nodes:
        dom = np.asarray(m.domains[name], dtype=float)
        cols[name] = dom[idx[name]]
    return Dataset.from_columns(cols)


# ---------------------------------------------------------------------------
# JSON serialization


def cgm_to_json(m: DiscreteCgm) -> str:
    variables = {}
    for name in m.dag.nodes:
        cpt = m.cpts[name]
        parent_doms = [m.domains[p] for p in cpt.parents]
        rows = {}
        sizes = [len(d) for d in parent_doms]
        for config in itertools.product(*(range(s) for s in sizes)):
            key = ",".join(str(parent_doms[k][i]) for k, i in enumerate(config))
            rows[key] = [float(v) for v in cpt.values[config]]
        variables[name] = {"domain": list(m.domains[name]), "cpt": rows}
    payload = {
        "nodes": list(m.dag.nodes),
        "edges": sorted(
            [m.dag.nodes[i], m.dag.nodes[j]] for i, j in m.dag.edges
        ),
        "variables": variables,
    }
    return json.dumps(payload, sort_keys=True)


def cgm_from_json(text: str) -> DiscreteCgm:
    try:
        payload = json.loads(text)
        dag = Dag(payload["nodes"], [tuple(e) for e in payload.get("edges", [])])
        domains = {}
        cpts = {}
        for name in dag.nodes:
            entry = payload["variables"][name]
            domains[name] = tuple(entry["domain"])
        for name in dag.nodes:
            entry = payload["variables"][name]
            parent_names = tuple(dag.nodes[p] for p in dag.parents(name))
            parent_doms = [domains[p] for p in parent_names]
            rows = {}
            for key, dist in entry["cpt"].items():
                parts = tuple(key.split(",")) if key else ()
                config = tuple(
                    _coerce(parts[k], parent_doms[k]) for k in range(len(parent_names))
                )
                rows[config] = [float(v) for v in dist]
            cpts[name] = Cpt.from_rows(
                name, parent_names, parent_doms, domains[name], rows
            )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise UsageError(f"bad CGM JSON: {exc}") from exc
    return DiscreteCgm(dag=dag, domains=domains, cpts=cpts)


def _coerce(text: str, domain: Sequence):
    for v in domain:
        if str(v) == text:
            return v
    raise UsageError(f"CPT row key part {text!r} not in domain {domain}")
