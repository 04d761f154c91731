"""Worst-case-optimal join by recursive attribute elimination.

generic_join binds one attribute at a time: candidates come from the smallest
projection view among the covering edges, and every other covering edge
filters by a degree probe. The result is the set of answers (assignments to
the requested attributes) of ⋈_F π_𝒪(R_F ⋉ s).

brute_force_join is the deliberately naive reference: backtracking over the
edge list, keeping bag multiplicity (every combination of base rows counts
once). It exists so everything else can be checked against it.
"""

from __future__ import annotations

from .queries import Hypergraph, edge_index


def _pick_attr(db, query, remaining, s, order_hint):
    if order_hint:
        for a in order_hint:
            if a in remaining:
                return a
    best = None
    for a in sorted(remaining):
        sizes = []
        for e in query.edges_containing(a):
            bound = {x: s[x] for x in e.attrs if x in s}
            idx = edge_index(db, e, _edge_order_front(e, bound, a))
            sizes.append(idx.project((a,), bound, dedup=True).size())
        score = min(sizes)
        if best is None or score < best[0]:
            best = (score, a)
    return best[1]


def _edge_order_front(edge, bound, attr):
    front = tuple(sorted(a for a in edge.attrs if a in bound))
    rest = tuple(sorted(a for a in edge.attrs if a not in bound and a != attr))
    return front + (attr,) + rest


def generic_join(db, query: Hypergraph, remaining=None, s=None, order_hint=None):
    """Set of answer tuples over sorted(remaining).

    s must already satisfy every edge it fully binds; edges disjoint from
    `remaining` are taken as satisfied.
    """
    remaining = frozenset(query.attributes if remaining is None else remaining)
    s = dict(s or {})
    out_attrs = tuple(sorted(remaining))
    results = set()
    for binding in _enumerate(db, query, remaining, s, order_hint):
        results.add(tuple(binding[a] for a in out_attrs))
    return results


def generic_join_exists(db, query: Hypergraph, remaining, s) -> bool:
    for _ in _enumerate(db, query, frozenset(remaining), dict(s), None):
        return True
    return False


def _enumerate(db, query, remaining, s, order_hint):
    if not remaining:
        yield s
        return
    attr = _pick_attr(db, query, remaining, s, order_hint)
    covering = query.edges_containing(attr)
    views = []
    for e in covering:
        bound = {x: s[x] for x in e.attrs if x in s}
        idx = edge_index(db, e, _edge_order_front(e, bound, attr))
        views.append((idx.project((attr,), bound, dedup=True), e, bound))
    views.sort(key=lambda t: (t[0].size(), t[1].eid))
    smallest, _, _ = views[0]
    rest = views[1:]
    sub_remaining = remaining - {attr}
    for (val,) in smallest:
        ok = True
        for view, e, bound in rest:
            if view.count_of((val,)) == 0:
                ok = False
                break
        if not ok:
            continue
        s[attr] = val
        yield from _enumerate(db, query, sub_remaining, s, order_hint)
    s.pop(attr, None)


def brute_force_join(db, query: Hypergraph):
    """Bag of full answers by backtracking over edges; returns (attrs, rows).

    Each consistent combination of base rows contributes one entry, so
    len(rows) is the bag join size and len(set(rows)) the distinct count.
    """
    attrs = tuple(sorted(query.attributes))
    rows = []
    edges = list(query.edges)

    def recurse(i, binding):
        if i == len(edges):
            rows.append(tuple(binding[a] for a in attrs))
            return
        e = edges[i]
        rel = db.relations[e.relation]
        for t in rel.tuples:
            ok = True
            added = []
            for a, v in zip(e.attrs, t):
                if a in binding:
                    if binding[a] != v:
                        ok = False
                        break
                else:
                    binding[a] = v
                    added.append(a)
            if ok:
                recurse(i + 1, binding)
            for a in added:
                del binding[a]

    recurse(0, {})
    return attrs, rows
