"""Join queries as hypergraphs, with exact fractional edge covers.

The cover LP (minimize Σ x_F·log|R_F| subject to Σ_{F∋v} x_F ≥ 1 and
0 ≤ x_F ≤ 1) is solved exactly over rationals by enumerating basic feasible
solutions; queries are tiny, so the polytope has few vertices. Objectives are
compared without floats by raising the integer sizes to L·x_F powers (L = lcm
of the exponent denominators) and comparing the resulting big integers, so
tie-breaking is deterministic: among optima, the lexicographically smallest
weight vector wins.

AGM values are kept as a float in the log domain plus the exact factored form.
Residual AGM products plug semijoin degrees into the same fixed cover.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction


class QueryError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    eid: int
    attrs: tuple  # attribute names, in relation schema order
    relation: str

    @property
    def attr_set(self):
        return frozenset(self.attrs)


class Hypergraph:
    def __init__(self, attributes, edges):
        self.attributes = tuple(attributes)
        self.edges = [
            Edge(i, tuple(attrs), rel) for i, (attrs, rel) in enumerate(edges)
        ]
        covered = set()
        for e in self.edges:
            if not e.attrs:
                raise QueryError(f"edge {e.eid} is empty")
            if len(set(e.attrs)) != len(e.attrs):
                raise QueryError(f"edge {e.eid} repeats an attribute: {e.attrs}")
            unknown = set(e.attrs) - set(self.attributes)
            if unknown:
                raise QueryError(f"edge {e.eid} uses undeclared attributes {sorted(unknown)}")
            covered |= set(e.attrs)
        missing = set(self.attributes) - covered
        if missing:
            raise QueryError(f"attributes {sorted(missing)} appear in no edge")

    def edges_touching(self, attrs):
        """ℰ_I: edges intersecting the attribute set."""
        attrs = set(attrs)
        return [e for e in self.edges if attrs & e.attr_set]

    def edges_containing(self, attr):
        return [e for e in self.edges if attr in e.attr_set]

    def projected_edges(self, attrs):
        """ℰ_{I,π}: (edge, projected attribute tuple) pairs for I-intersecting edges."""
        attrs = set(attrs)
        out = []
        for e in self.edges:
            inter = tuple(a for a in e.attrs if a in attrs)
            if inter:
                out.append((e, inter))
        return out

    def primal_neighbors(self):
        nb = {a: set() for a in self.attributes}
        for e in self.edges:
            for a in e.attrs:
                nb[a] |= e.attr_set - {a}
        return nb


def validate(query: Hypergraph, db) -> None:
    """Check every edge binds a known relation of matching arity."""
    for e in query.edges:
        rel = db.relations.get(e.relation)
        if rel is None:
            raise QueryError(f"edge {e.eid} binds unknown relation {e.relation!r}")
        if rel.arity != len(e.attrs):
            raise QueryError(
                f"edge {e.eid}: relation {e.relation!r} has arity {rel.arity}, "
                f"edge has {len(e.attrs)}"
            )


def edge_index(db, edge: Edge, order):
    """TrieIndex over edge's relation, keyed by QUERY attribute names.

    Relation columns map to the edge's attrs positionally. When the names
    differ (self-joins bind one relation under several attribute tuples), a
    schema-aliased view sharing the same tuple storage is registered once per
    (relation, attrs) pair and indexed instead.
    """
    from .relations import Relation

    rel = db.relation(edge.relation)
    if rel.schema == edge.attrs:
        return db.index(edge.relation, order)
    alias = f"{edge.relation}@{','.join(edge.attrs)}"
    if alias not in db.relations:
        db.relations[alias] = Relation(alias, edge.attrs, rel.tuples, rel.interner)
    return db.index(alias, order)


@dataclass
class Cover:
    """Exact-rational fractional edge cover."""

    weights: dict  # eid -> Fraction in [0, 1]

    def rho(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    def feasible(self, query: Hypergraph) -> bool:
        for a in query.attributes:
            if sum(self.weights[e.eid] for e in query.edges_containing(a)) < 1:
                return False
        return all(0 <= x <= 1 for x in self.weights.values())


@dataclass
class AgmValue:
    log: float
    factors: tuple  # ((size, Fraction exponent), ...)

    @property
    def value(self) -> float:
        return math.exp(self.log)


def _objective_key(sizes_by_eid, weights):
    """Exact comparison key for Π size^x: integer Π size^(L·x)."""
    denom_lcm = 1
    for x in weights.values():
        denom_lcm = denom_lcm * x.denominator // math.gcd(denom_lcm, x.denominator)
    prod = 1
    for eid, x in weights.items():
        e = x * denom_lcm
        prod *= sizes_by_eid[eid] ** int(e)
    return denom_lcm, prod


def _compare_objectives(sizes_by_eid, wa, wb):
    """-1/0/1 for Π s^wa vs Π s^wb: float screen, exact big-int settle."""
    la = sum(float(x) * math.log(sizes_by_eid[eid]) for eid, x in wa.items())
    lb = sum(float(x) * math.log(sizes_by_eid[eid]) for eid, x in wb.items())
    if abs(la - lb) > 1e-9:
        return -1 if la < lb else 1
    ka, pa = _objective_key(sizes_by_eid, wa)
    kb, pb = _objective_key(sizes_by_eid, wb)
    left = pa ** kb
    right = pb ** ka
    return (left > right) - (left < right)


def fractional_edge_cover(query: Hypergraph, sizes) -> Cover:
    """Exact optimal cover minimizing Π |R_F|^{x_F} (sizes keyed by eid).

    Enumerates basic feasible solutions: every LP vertex is the unique
    solution of m tight constraints drawn from the cover rows and the box
    rows. Deterministic tie-break: lexicographically smallest weight vector
    (by eid) among optima.
    """
    m = len(query.edges)
    sizes_by_eid = {e.eid: int(sizes[e.eid]) for e in query.edges}
    for eid, n in sizes_by_eid.items():
        if n < 1:
            raise QueryError(f"edge {eid} has size {n} < 1")
    rows = []
    for a in query.attributes:
        coeffs = [1 if a in e.attr_set else 0 for e in query.edges]
        rows.append((coeffs, Fraction(1)))
    for j in range(m):
        coeffs = [0] * m
        coeffs[j] = 1
        rows.append((list(coeffs), Fraction(0)))  # x_j = 0 candidate
        rows.append((list(coeffs), Fraction(1)))  # x_j = 1 candidate

    nattrs = len(query.attributes)
    box_var = {nattrs + 2 * j + b: j for j in range(m) for b in (0, 1)}
    best = None
    seen = set()
    for combo in itertools.combinations(range(len(rows)), m):
        vars_hit = [box_var[i] for i in combo if i in box_var]
        if len(vars_hit) != len(set(vars_hit)):
            continue  # both box rows of one variable: parallel, singular
        sol = _solve_exact([rows[i] for i in combo], m)
        if sol is None:
            continue
        key = tuple(sol)
        if key in seen:
            continue
        seen.add(key)
        if any(x < 0 or x > 1 for x in sol):
            continue
        weights = {e.eid: sol[j] for j, e in enumerate(query.edges)}
        cand = Cover(weights)
        if not cand.feasible(query):
            continue
        if best is None:
            best = cand
            continue
        cmp = _compare_objectives(sizes_by_eid, cand.weights, best.weights)
        if cmp < 0 or (cmp == 0 and _lex_key(cand) < _lex_key(best)):
            best = cand
    if best is None:
        raise QueryError("cover LP has no feasible vertex (unreachable for valid queries)")
    return best


def _lex_key(cover: Cover):
    return tuple(cover.weights[eid] for eid in sorted(cover.weights))


def _solve_exact(tight_rows, m):
    """Solve the m×m rational system; None when singular."""
    a = [list(map(Fraction, coeffs)) + [rhs] for coeffs, rhs in tight_rows]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            return None
        a[col], a[piv] = a[piv], a[col]
        inv = a[col][col]
        a[col] = [v / inv for v in a[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [v - f * w for v, w in zip(a[r], a[col])]
    return [a[r][m] for r in range(m)]


def agm(cover: Cover, sizes) -> AgmValue:
    log = 0.0
    factors = []
    for eid, x in sorted(cover.weights.items()):
        n = int(sizes[eid])
        factors.append((n, x))
        if x:
            log += float(x) * math.log(n)
    return AgmValue(log, tuple(factors))


def residual_agm(db, query: Hypergraph, cover: Cover, remaining, s) -> float:
    """Π_{F ∈ ℰ_𝒪} |R_F ⋉ s|^{x_F} under the original cover; 0.0 if any
    semijoin with positive weight is empty."""
    log = 0.0
    for e in query.edges_touching(remaining):
        x = cover.weights[e.eid]
        bound = {a: s[a] for a in e.attrs if a in s}
        order = _edge_order(e, bound)
        deg = edge_index(db, e, order).degree(bound)
        if deg == 0:
            return 0.0
        if x:
            log += float(x) * math.log(deg)
    return math.exp(log)


def _edge_order(edge: Edge, bound):
    """Canonical index order: bound attributes (sorted) first, rest sorted."""
    front = tuple(sorted(a for a in edge.attrs if a in bound))
    back = tuple(sorted(a for a in edge.attrs if a not in bound))
    return front + back


def half_integral_cover(query: Hypergraph, sizes=None):
    """Optimal cover with x_F ∈ {0, 1/2, 1} whose support splits into
    vertex-disjoint odd cycles (all halves) and stars (all ones).

    Only defined for binary edges. Returns (Cover, components) where each
    component is ("cycle", [attr cycle sequence], [eids in cycle order]) or
    ("star", center attr, [eids]).
    """
    for e in query.edges:
        if len(e.attrs) != 2:
            raise QueryError(f"edge {e.eid} is not binary")
    if sizes is None:
        sizes = {e.eid: 2 for e in query.edges}
    sizes_by_eid = {e.eid: int(sizes[e.eid]) for e in query.edges}

    general = fractional_edge_cover(query, sizes_by_eid)
    levels = (Fraction(0), Fraction(1, 2), Fraction(1))
    best = None
    for assignment in itertools.product(levels, repeat=len(query.edges)):
        weights = {e.eid: assignment[i] for i, e in enumerate(query.edges)}
        cand = Cover(weights)
        if not cand.feasible(query):
            continue
        if _compare_objectives(sizes_by_eid, cand.weights, general.weights) != 0:
            continue
        comps = _support_components(query, cand)
        if comps is None:
            continue
        if best is None or _lex_key(cand) < _lex_key(best[0]):
            best = (cand, comps)
    if best is None:
        raise QueryError("no half-integral optimum with cycle/star support (unexpected)")
    return best


def _support_components(query: Hypergraph, cover: Cover):
    """Split supp(x) into odd cycles (weight 1/2) and stars (weight 1);
    None when the support has any other shape."""
    support = [e for e in query.edges if cover.weights[e.eid] > 0]
    adj = {}
    for e in support:
        a, b = e.attrs
        adj.setdefault(a, []).append((b, e))
        adj.setdefault(b, []).append((a, e))
    seen_attrs = set()
    comps = []
    for start in sorted(adj):
        if start in seen_attrs:
            continue
        stack, attrs, edges = [start], set(), set()
        while stack:
            v = stack.pop()
            if v in attrs:
                continue
            attrs.add(v)
            for w, e in adj[v]:
                edges.add(e)
                if w not in attrs:
                    stack.append(w)
        seen_attrs |= attrs
        ws = {cover.weights[e.eid] for e in edges}
        if ws == {Fraction(1, 2)}:
            cyc = _as_odd_cycle(attrs, edges, adj)
            if cyc is None:
                return None
            comps.append(("cycle",) + cyc)
        elif ws == {Fraction(1)}:
            star = _as_star(attrs, edges)
            if star is None:
                return None
            comps.append(("star",) + star)
        else:
            return None
    comps.sort(key=lambda c: min(c[1]) if c[0] == "cycle" else c[1])
    return comps


def _as_odd_cycle(attrs, edges, adj):
    if len(edges) != len(attrs) or len(edges) % 2 == 0 or len(edges) < 3:
        return None
    deg = {a: 0 for a in attrs}
    for e in edges:
        for a in e.attrs:
            deg[a] += 1
    if set(deg.values()) != {2}:
        return None
    start = min(attrs)
    seq = [start]
    used = set()
    cur = start
    nexts = sorted(((w, e) for w, e in adj[cur] if e in edges),
                   key=lambda t: (t[0], t[1].eid))
    cur_edge = nexts[0][1]
    eids = []
    while True:
        used.add(cur_edge)
        eids.append(cur_edge.eid)
        nxt = next(a for a in cur_edge.attrs if a != cur)
        if nxt == start:
            break
        seq.append(nxt)
        cur = nxt
        cur_edge = next(e for _, e in sorted(adj[cur], key=lambda t: (t[0], t[1].eid))
                        if e in edges and e not in used)
    if len(seq) != len(attrs):
        return None
    return seq, eids


def _as_star(attrs, edges):
    if len(edges) == 1:
        e = next(iter(edges))
        center = min(e.attrs)
        return center, [e.eid]
    common = None
    for e in edges:
        common = e.attr_set if common is None else common & e.attr_set
    if not common:
        return None
    center = min(common)
    return center, sorted(e.eid for e in edges)


@dataclass
class Query:
    """Parsed query file: hypergraph plus optional projection and GHD hint."""

    hypergraph: Hypergraph
    projection: tuple | None = None
    user_ghd: dict | None = None


def parse_query_text(text: str) -> Query:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QueryError(f"query file is not valid JSON: {exc}") from exc
    try:
        attrs = list(doc["attributes"])
        edges = [(tuple(e["vars"]), e["relation"]) for e in doc["edges"]]
    except (KeyError, TypeError) as exc:
        raise QueryError(f"query file missing field: {exc}") from exc
    hg = Hypergraph(attrs, edges)
    projection = tuple(doc["projection"]) if doc.get("projection") else None
    if projection and not set(projection) <= set(hg.attributes):
        raise QueryError("projection uses undeclared attributes")
    return Query(hg, projection, doc.get("ghd"))


def load_query_file(path) -> Query:
    with open(path, encoding="utf-8") as fh:
        return parse_query_text(fh.read())


def relation_sizes(db, query: Hypergraph) -> dict:
    return {e.eid: len(db.relations[e.relation]) for e in query.edges}
