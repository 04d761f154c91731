"""Generalized hypertree decompositions and decomposition-based estimation.

A decomposition assigns each tree node a bag of attributes such that every
query edge fits inside some bag and, for every attribute, the nodes whose
bags contain it form a connected subtree. Each node then carries the join of
the edge projections onto its bag, and the full answer count is the
annotated join over the tree: per node, a table keyed by the attributes
shared with other bags whose annotations count the node answers extending
the key. Tables combine bottom-up by marginalize-then-join.

Annotations come from three sources:
  - exact group counts when one edge covers the whole bag (no sampling),
  - sampled estimates (any strategy from estimators) otherwise,
  - plain enumeration for the width computation, which never touches data:
    node width is the unweighted fractional edge cover number of the bag.

Widths are exact rationals; the decomposition of minimal width (fhtw) is
found by enumerating bags that are unions of edge attribute sets and all
labeled trees over each bag choice.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .estimators import GJSample, Plan, derive_rng, generic_card_est
from .queries import (
    Hypergraph,
    QueryError,
    fractional_edge_cover,
    residual_agm,
    validate,
)
from .relations import Relation
from .wcoj import generic_join


@dataclass
class GHD:
    bags: list          # frozensets of attributes
    tree_edges: list    # (i, j) index pairs
    root: int = 0

    def __post_init__(self):
        n = len(self.bags)
        self.adj = {i: set() for i in range(n)}
        for i, j in self.tree_edges:
            self.adj[i].add(j)
            self.adj[j].add(i)
        self.parent = {self.root: None}
        order = [self.root]
        seen = {self.root}
        for node in order:
            for nb in sorted(self.adj[node]):
                if nb not in seen:
                    seen.add(nb)
                    self.parent[nb] = node
                    order.append(nb)
        if len(order) != n:
            raise QueryError("decomposition tree is not connected")
        self.topdown = order
        self.bottomup = list(reversed(order))

    def signature(self):
        bags = [tuple(sorted(b)) for b in self.bags]
        edges = tuple(sorted(tuple(sorted((bags[i], bags[j]))) for i, j in self.tree_edges))
        return (tuple(sorted(bags)), edges)

    def shared_attrs(self, t) -> frozenset:
        """G(t): attributes of bag t that occur in some other bag."""
        others = set()
        for i, b in enumerate(self.bags):
            if i != t:
                others |= b
        return frozenset(self.bags[t] & others)

    def top_node(self, attr) -> int:
        for node in self.topdown:
            if attr in self.bags[node]:
                return node
        raise KeyError(attr)


def _connected(nodes, adj) -> bool:
    nodes = set(nodes)
    if not nodes:
        return True
    stack = [next(iter(nodes))]
    seen = set()
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        stack.extend(adj[x] & nodes)
    return seen == nodes


def check_ghd(query: Hypergraph, ghd: GHD) -> None:
    """Raise unless every edge fits in a bag and subtrees are connected."""
    for e in query.edges:
        if not any(e.attr_set <= b for b in ghd.bags):
            raise QueryError(f"edge {e.eid} {tuple(e.attrs)} fits in no bag")
    for a in query.attributes:
        holding = {i for i, b in enumerate(ghd.bags) if a in b}
        if holding and not _connected(holding, ghd.adj):
            raise QueryError(f"attribute {a} spans a disconnected set of bags")
    covered = set().union(*ghd.bags) if ghd.bags else set()
    if set(query.attributes) - covered:
        raise QueryError("bags do not cover every attribute")


def _trees(n):
    """All labeled trees on n nodes, as edge lists (Pruefer decoding)."""
    if n == 1:
        yield []
        return
    if n == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        deg = [1] * n
        for x in seq:
            deg[x] += 1
        edges = []
        leaves = [i for i in range(n) if deg[i] == 1]
        heapq.heapify(leaves)
        for x in seq:
            lf = heapq.heappop(leaves)
            edges.append((lf, x))
            deg[x] -= 1
            if deg[x] == 1:
                heapq.heappush(leaves, x)
        u = heapq.heappop(leaves)
        v = heapq.heappop(leaves)
        edges.append((u, v))
        yield edges


def enumerate_ghds(query: Hypergraph, max_nodes=None):
    """Distinct valid decompositions with edge-union bags.

    Bags are unions of edge attribute sets, at most one bag per tree node,
    up to |edges| nodes (or max_nodes). Duplicates by signature are dropped.
    """
    edge_sets = [e.attr_set for e in query.edges]
    unions = set()
    for r in range(1, len(edge_sets) + 1):
        for combo in itertools.combinations(range(len(edge_sets)), r):
            unions.add(frozenset().union(*(edge_sets[i] for i in combo)))
    pool = sorted(unions, key=lambda b: (len(b), tuple(sorted(b))))
    limit = max_nodes or len(query.edges)
    seen = set()
    out = []
    for r in range(1, limit + 1):
        for bags in itertools.combinations(pool, r):
            if not all(any(es <= b for b in bags) for es in edge_sets):
                continue
            for tree in _trees(r):
                ghd = GHD(list(bags), tree)
                try:
                    check_ghd(query, ghd)
                except QueryError:
                    continue
                sig = ghd.signature()
                if sig in seen:
                    continue
                seen.add(sig)
                out.append(ghd)
    return out


def rho_star(attrs, query: Hypergraph) -> Fraction:
    """Unweighted fractional edge cover number of the bag."""
    attrs = frozenset(attrs)
    edges = []
    seen = set()
    for e in query.edges:
        inter = tuple(sorted(e.attr_set & attrs))
        if inter and inter not in seen:
            seen.add(inter)
            edges.append((inter, e.relation))
    sub = Hypergraph(sorted(attrs), edges)
    sizes = {e.eid: 2 for e in sub.edges}  # constant sizes: objective = sum of x
    cover = fractional_edge_cover(sub, sizes)
    return cover.rho()


def width(ghd: GHD, query: Hypergraph) -> Fraction:
    return max(rho_star(b, query) for b in ghd.bags)


def fhtw(query: Hypergraph):
    """(minimal width over enumerated decompositions, witness GHD)."""
    best = None
    for ghd in enumerate_ghds(query):
        w = width(ghd, query)
        key = (w, len(ghd.bags), ghd.signature())
        if best is None or key < best[0]:
            best = (key, ghd)
    if best is None:
        raise QueryError("no decomposition found")
    return best[0][0], best[1]


def join_tree(query: Hypergraph):
    """Single-edge-bag join tree via ear removal; None when cyclic."""
    alive = {e.eid: e.attr_set for e in query.edges}
    parent = {}
    while len(alive) > 1:
        found = None
        for eid in sorted(alive):
            rest = [w for w in alive if w != eid]
            shared = alive[eid] & set().union(*(alive[w] for w in rest))
            witness = next((w for w in sorted(rest) if shared <= alive[w]), None)
            if witness is not None:
                found = (eid, witness)
                break
        if found is None:
            return None
        eid, witness = found
        parent[eid] = witness
        del alive[eid]
    root = next(iter(alive))
    index = {e.eid: i for i, e in enumerate(query.edges)}
    bags = [e.attr_set for e in query.edges]
    tree = [(index[c], index[p]) for c, p in parent.items()]
    return GHD(bags, tree, root=index[root])


def project_relation(db, edge, attrs) -> str:
    """Materialize the deduplicated projection of an edge onto bag attrs;
    returns the derived relation name (cached)."""
    inter = tuple(sorted(edge.attr_set & set(attrs)))
    name = f"{edge.relation}[{','.join(edge.attrs)}|{','.join(inter)}]"
    if name not in db.relations:
        rel = db.relation(edge.relation)
        pos = [edge.attrs.index(a) for a in inter]
        rows = sorted({tuple(t[p] for p in pos) for t in rel.tuples})
        db.relations[name] = Relation(name, inter, rows, rel.interner)
        db.ops.add(len(rel))
    return name


def node_query(db, query: Hypergraph, bag) -> Hypergraph:
    """Join of the edge projections onto one bag, over derived relations."""
    bag = frozenset(bag)
    edges = []
    seen = set()
    for e in query.edges_touching(bag):
        inter = tuple(sorted(e.attr_set & bag))
        name = project_relation(db, e, bag)
        if (inter, name) in seen:
            continue
        seen.add((inter, name))
        edges.append((inter, name))
    return Hypergraph(sorted(bag), edges)


def _node_agm(db, query, bag) -> float:
    nq = node_query(db, query, bag)
    plan = Plan(db, nq)
    return plan.agm


def choose_ghd(db, query: Hypergraph) -> GHD:
    """Minimal width first; data sizes only break ties (smallest maximal
    node AGM over projected relations, then fewer nodes, then signature)."""
    best = None
    for ghd in enumerate_ghds(query):
        w = width(ghd, query)
        if best is not None and w > best[0][0]:
            continue
        amax = max(_node_agm(db, query, b) for b in ghd.bags)
        key = (w, amax, len(ghd.bags), ghd.signature())
        if best is None or key < best[0]:
            best = (key, ghd)
    return best[1]


def group_by_card_est(db, nq: Hypergraph, group_attrs, strategy, budget,
                      seed=0, stream="g") -> dict:
    """Annotated table for one node: exact keys over the shared attributes,
    sampled per-group counts of the node answers extending each key.

    budget: runs averaged per group, or "auto" for ceil(|bag| * residual
    AGM of the ungrouped part), the schedule behind the stated variance
    bound. Each group consumes its own derived random stream.
    """
    G = tuple(sorted(group_attrs))
    keys = sorted(generic_join(db, nq, remaining=G))
    # group attrs lead the elimination order: they arrive bound, and every
    # per-edge index order must keep bound attrs as a prefix
    rest = tuple(a for a in nq.attributes if a not in set(G))
    plan = Plan(db, nq, elim_order=G + rest)
    remaining = frozenset(nq.attributes) - set(G)
    table = {}
    for key in keys:
        g = dict(zip(G, key))
        if not remaining:
            table[key] = 1.0
            continue
        if budget == "auto":
            ragm = residual_agm(db, nq, plan.cover, remaining, g)
            runs = max(1, math.ceil(len(nq.attributes) * ragm))
        else:
            runs = budget
        acc = 0.0
        for i in range(runs):
            rng = derive_rng(seed, f"{stream}/{'/'.join(map(str, key))}", i)
            acc += generic_card_est(plan, strategy, remaining, g, rng)
        table[key] = acc / runs
    return table


def _marginalize(schema, table, keep):
    idxs = [schema.index(a) for a in keep]
    out = {}
    for key, z in table.items():
        k2 = tuple(key[i] for i in idxs)
        out[k2] = out.get(k2, 0.0) + z
    return tuple(keep), out


def _join_into(schema_p, table_p, schema_c, table_c):
    idxs = [schema_p.index(a) for a in schema_c]
    out = {}
    for key, z in table_p.items():
        sub = tuple(key[i] for i in idxs)
        zc = table_c.get(sub)
        if zc is not None:
            out[key] = z * zc
    return out


def simple_aggro_yannakakis(ghd: GHD, tables) -> float:
    """Fold annotated node tables bottom-up; returns the scalar total.

    tables[t] = (schema tuple, {key: annotation}). Annotations multiply on
    join and sum on marginalization; the root marginalizes to a scalar.
    """
    tables = {t: (tuple(s), dict(d)) for t, (s, d) in tables.items()}
    for t in ghd.bottomup:
        schema, table = tables[t]
        shared = ghd.shared_attrs(t)
        beta = {a for a in shared if ghd.top_node(a) == t}
        keep = [a for a in schema if a not in beta and a in shared]
        schema2, table2 = _marginalize(schema, table, keep)
        parent = ghd.parent[t]
        if parent is None:
            total = 0.0
            for _, z in _marginalize(schema2, table2, [])[1].items():
                total += z
            return total
        ps, pt = tables[parent]
        tables[parent] = (ps, _join_into(ps, pt, schema2, table2))
    raise AssertionError("tree had no root")


def _shortcut_nodes(query: Hypergraph, ghd: GHD) -> dict:
    """Nodes where one edge covers the bag, with the chosen edge.

    Dropping the other projections there is sound only if every edge fully
    inside the bag is still enforced at some non-shortcut node (or at a node
    whose bag equals that edge). Offenders lose the shortcut iteratively.
    """
    chosen = {}
    for t, bag in enumerate(ghd.bags):
        covering = [e for e in query.edges if bag <= e.attr_set]
        if covering:
            chosen[t] = min(covering, key=lambda e: e.eid)
    while True:
        demote = None
        for t in sorted(chosen):
            bag = ghd.bags[t]
            for e in query.edges:
                if not (e.attr_set <= bag) or e.eid == chosen[t].eid:
                    continue
                enforced = False
                for t2, bag2 in enumerate(ghd.bags):
                    if t2 == t or not (e.attr_set <= bag2):
                        continue
                    if t2 not in chosen or bag2 == e.attr_set:
                        enforced = True
                        break
                if not enforced:
                    demote = t
                    break
            if demote is not None:
                break
        if demote is None:
            return chosen
        del chosen[demote]


def _shortcut_table(db, query, ghd, t, edge) -> tuple:
    """Exact annotations from the single covering edge: group the dedup'd
    bag projection by the shared attributes and count."""
    bag = ghd.bags[t]
    name = project_relation(db, edge, bag)
    rel = db.relation(name)
    G = tuple(sorted(ghd.shared_attrs(t)))
    idxs = [rel.schema.index(a) for a in G]
    table = {}
    for row in set(rel.tuples):
        key = tuple(row[i] for i in idxs)
        table[key] = table.get(key, 0.0) + 1.0
    db.ops.add(len(rel))
    return G, table


def ghd_card_est(db, query: Hypergraph, ghd: GHD = None, strategy=None,
                 budget=64, seed=0) -> float:
    """Unbiased count estimate through a decomposition.

    Per node: exact keys over the shared attributes; annotations are exact
    when a single edge covers the bag (where sound), sampled otherwise.
    With a join tree (all bags single-edge) the result is the exact count.
    """
    validate(query, db)
    if ghd is None:
        ghd = choose_ghd(db, query)
    else:
        check_ghd(query, ghd)
    strategy = strategy or GJSample()
    shortcuts = _shortcut_nodes(query, ghd)
    tables = {}
    for t, bag in enumerate(ghd.bags):
        if t in shortcuts:
            tables[t] = _shortcut_table(db, query, ghd, t, shortcuts[t])
            continue
        nq = node_query(db, query, bag)
        G = tuple(sorted(ghd.shared_attrs(t)))
        table = group_by_card_est(db, nq, G, strategy, budget,
                                  seed=seed, stream=f"node{t}")
        tables[t] = (G, table)
    return simple_aggro_yannakakis(ghd, tables)
