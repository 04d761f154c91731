"""Relation storage and trie indexes.

A Relation is a bag of tuples over named attributes, with values interned to
integer ids so hot loops compare ints only. A TrieIndex nests the tuples of
one relation along a fixed attribute order and keeps subtree counts, which
makes semijoin degrees, positional access, row sampling, and projection views
cheap (one binary search per level).

A Database owns the interner, the relations, and a lazy cache of indexes
keyed by (relation name, attribute order). It also meters query-model
operations: every degree / access / exist / sample_row / view call bumps a
counter, which benchmark reports read as the cost measure T. Index builds are
treated as preprocessing and are not metered.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass


class SchemaError(ValueError):
    pass


class UnsupportedOrderError(LookupError):
    """The binding is not a prefix of this index's attribute order."""


class EmptySemijoinError(LookupError):
    pass


class Interner:
    """Bijection between raw values and dense integer ids.

    Ids are handed out in sorted batches per load call (ints before strings,
    each group ascending), so a database loaded from one relation keeps the
    natural value order. Later loads may interleave arbitrarily; nothing
    downstream depends on id order matching value order.
    """

    def __init__(self):
        self._ids: dict = {}
        self._values: list = []

    def intern(self, value) -> int:
        vid = self._ids.get(value)
        if vid is None:
            vid = len(self._values)
            self._ids[value] = vid
            self._values.append(value)
        return vid

    def intern_batch(self, values) -> None:
        fresh = {v for v in values if v not in self._ids}
        for v in sorted(fresh, key=lambda x: (x.__class__.__name__, x)):
            self.intern(v)

    def decode(self, vid: int):
        return self._values[vid]

    def __len__(self):
        return len(self._values)


@dataclass
class Relation:
    """Bag of interned tuples over a fixed schema."""

    name: str
    schema: tuple
    tuples: list  # list of tuples of interned ids, duplicates kept
    interner: Interner

    def __len__(self):
        return len(self.tuples)

    @property
    def arity(self):
        return len(self.schema)


def load_relation(name, schema, rows, interner=None) -> Relation:
    """Intern and store rows as a bag. Raises SchemaError on arity mismatch."""
    schema = tuple(schema)
    if len(set(schema)) != len(schema):
        raise SchemaError(f"{name}: duplicate attribute in schema {schema}")
    interner = interner if interner is not None else Interner()
    seen = set()
    for row in rows:
        if len(row) != len(schema):
            raise SchemaError(
                f"{name}: row {row!r} has arity {len(row)}, schema has {len(schema)}"
            )
        seen.update(row)
    interner.intern_batch(seen)
    tuples = [tuple(interner.intern(v) for v in row) for row in rows]
    return Relation(name, schema, tuples, interner)


class _Node:
    __slots__ = ("keys", "cum", "children")

    def __init__(self):
        self.keys = []
        self.cum = [0]  # cum[i] = tuples under keys[:i]; cum[-1] = node total
        self.children = []  # aligned with keys; None at the last level


def _build_levels(sorted_tuples, lo, hi, depth, arity):
    node = _Node()
    i = lo
    while i < hi:
        key = sorted_tuples[i][depth]
        j = i
        while j < hi and sorted_tuples[j][depth] == key:
            j += 1
        node.keys.append(key)
        node.cum.append(node.cum[-1] + (j - i))
        if depth + 1 < arity:
            node.children.append(_build_levels(sorted_tuples, i, j, depth + 1, arity))
        else:
            node.children.append(None)
        i = j
    return node


class TrieIndex:
    """Immutable prefix index over one relation for one attribute order."""

    def __init__(self, relation: Relation, order, counter=None):
        order = tuple(order)
        if sorted(order) != sorted(relation.schema):
            raise SchemaError(
                f"order {order} is not a permutation of schema {relation.schema}"
            )
        self.relation = relation
        self.order = order
        self._pos = {a: i for i, a in enumerate(order)}
        self._counter = counter
        perm = [relation.schema.index(a) for a in order]
        reordered = sorted(tuple(t[p] for p in perm) for t in relation.tuples)
        self.root = _build_levels(reordered, 0, len(reordered), 0, len(order)) \
            if reordered else _Node()

    def _charge(self, k=1):
        if self._counter is not None:
            self._counter.add(k)

    def _prefix_attrs(self, s):
        bound = [a for a in self.order if a in s]
        if tuple(bound) != self.order[: len(bound)]:
            raise UnsupportedOrderError(
                f"binding {sorted(set(s) & set(self.order))} is not a prefix of order {self.order}"
            )
        return bound

    def _descend(self, s):
        """Walk to the node under the bound prefix; None if absent."""
        node = self.root
        for attr in self._prefix_attrs(s):
            i = bisect.bisect_left(node.keys, s[attr])
            if i == len(node.keys) or node.keys[i] != s[attr]:
                return None, 0
            count = node.cum[i + 1] - node.cum[i]
            node = node.children[i]
            if node is None:
                return None, count  # full tuple bound; count = multiplicity
        return node, count if node is None else node.cum[-1]

    def degree(self, s) -> int:
        """|R ⋉ s| counted with multiplicity; 0 when the prefix is absent."""
        self._charge()
        node, count = self._descend(s)
        if node is None and count == 0:
            return 0
        return count

    def access(self, s, attrs, i: int):
        """i-th distinct value combination of `attrs` under prefix s, ascending."""
        self._charge()
        view = self.project(attrs, s, dedup=True)
        return view.at(i)

    def exist(self, row) -> bool:
        """row: mapping binding every schema attribute."""
        self._charge()
        if not set(self.order) <= set(row):
            raise SchemaError("exist() needs a fully bound row")
        _, count = self._descend({a: row[a] for a in self.order})
        return count > 0

    def sample_row(self, s, rng: random.Random):
        """Uniform row of R ⋉ s (multiplicity-weighted); tuple in index order."""
        self._charge()
        node, total = self._descend(s)
        if total == 0:
            raise EmptySemijoinError(f"empty semijoin under {s}")
        out = [s[a] for a in self._prefix_attrs(s)]
        while node is not None:
            x = rng.randrange(node.cum[-1])
            i = bisect.bisect_right(node.cum, x) - 1
            out.append(node.keys[i])
            node = node.children[i]
        return tuple(out)

    def project(self, attrs, s, dedup: bool):
        """View of π_attrs(R ⋉ s); attrs must directly follow the bound prefix."""
        self._charge()
        attrs = tuple(attrs)
        bound = self._prefix_attrs(s)
        want = self.order[len(bound): len(bound) + len(attrs)]
        if tuple(sorted(attrs)) != tuple(sorted(want)):
            raise UnsupportedOrderError(
                f"projection {attrs} does not follow prefix {bound} in order {self.order}"
            )
        node, _ = self._descend(s)
        return View(self, node, want, dedup)


class View:
    """Handle over π_I(R ⋉ s) for one index node.

    dedup=True ranges over distinct I-values; dedup=False weights them by the
    number of supporting rows. Single-attribute views are O(1)/O(log); wider
    ones walk the subtrie (fine at the scales this package targets).
    """

    def __init__(self, index, node, attrs, dedup):
        self.index = index
        self.node = node
        self.attrs = attrs
        self.dedup = dedup

    def size(self) -> int:
        if self.node is None:
            return 0
        if not self.dedup:
            return self.node.cum[-1]
        if len(self.attrs) == 1:
            return len(self.node.keys)
        return sum(1 for _ in self._walk(self.node, len(self.attrs)))

    def _walk(self, node, depth, prefix=()):
        for i, key in enumerate(node.keys):
            cur = prefix + (key,)
            if depth == 1:
                yield cur, node.cum[i + 1] - node.cum[i]
            else:
                yield from self._walk(node.children[i], depth - 1, cur)

    def __iter__(self):
        if self.node is None:
            return
        if len(self.attrs) == 1:
            yield from ((k,) for k in self.node.keys)
        else:
            yield from (t for t, _ in self._walk(self.node, len(self.attrs)))

    def at(self, i: int):
        if self.node is None or i < 0:
            raise IndexError(i)
        if len(self.attrs) == 1:
            if i >= len(self.node.keys):
                raise IndexError(i)
            return (self.node.keys[i],)
        for j, (t, _) in enumerate(self._walk(self.node, len(self.attrs))):
            if j == i:
                return t
        raise IndexError(i)

    def sample(self, rng: random.Random):
        self.index._charge()
        if self.node is None or self.size() == 0:
            raise EmptySemijoinError("sample() on an empty view")
        if self.dedup:
            if len(self.attrs) == 1:
                return (self.node.keys[rng.randrange(len(self.node.keys))],)
            combos = list(self)
            return combos[rng.randrange(len(combos))]
        node = self.node
        out = []
        for _ in self.attrs:
            x = rng.randrange(node.cum[-1])
            i = bisect.bisect_right(node.cum, x) - 1
            out.append(node.keys[i])
            node = node.children[i]
        return tuple(out)

    def count_of(self, value_combo) -> int:
        """Supporting-row count of one I-value (0 when absent)."""
        node = self.node
        for v in value_combo:
            if node is None:
                return 0
            i = bisect.bisect_left(node.keys, v)
            if i == len(node.keys) or node.keys[i] != v:
                return 0
            count = node.cum[i + 1] - node.cum[i]
            node = node.children[i]
        return count


class OpCounter:
    __slots__ = ("n",)

    def __init__(self):
        self.n = 0

    def add(self, k=1):
        self.n += k


class Database:
    """Shared interner + relations + lazy index cache + operation meter."""

    def __init__(self):
        self.interner = Interner()
        self.relations: dict[str, Relation] = {}
        self._indexes: dict = {}
        self.ops = OpCounter()

    def load(self, name, schema, rows) -> Relation:
        rel = load_relation(name, schema, rows, self.interner)
        self.relations[name] = rel
        return rel

    def relation(self, name) -> Relation:
        return self.relations[name]

    def index(self, name, order) -> TrieIndex:
        key = (name, tuple(order))
        idx = self._indexes.get(key)
        if idx is None:
            idx = TrieIndex(self.relations[name], order, counter=self.ops)
            self._indexes[key] = idx
        return idx

    def decode_tuple(self, ids):
        return tuple(self.interner.decode(v) for v in ids)

    def reset_ops(self):
        self.ops.n = 0


def build_index(relation: Relation, order) -> TrieIndex:
    return TrieIndex(relation, order)


def _parse_value(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        return token


def parse_relation_file(text: str):
    """`name:A,B` header, then comma-separated value lines; blanks ignored."""
    lines = [ln for ln in text.splitlines()]
    header = None
    rows = []
    for ln in lines:
        if not ln.strip():
            continue
        if header is None:
            if ":" not in ln:
                raise SchemaError(f"missing `name:attrs` header, got {ln!r}")
            name, _, attrs = ln.partition(":")
            header = (name.strip(), tuple(a.strip() for a in attrs.split(",")))
            if not all(header[1]):
                raise SchemaError(f"bad attribute list in header {ln!r}")
            continue
        rows.append(tuple(_parse_value(tok) for tok in ln.split(",")))
    if header is None:
        raise SchemaError("empty relation file")
    return header[0], header[1], rows


def load_relation_file(db: Database, path) -> Relation:
    with open(path, encoding="utf-8") as fh:
        name, schema, rows = parse_relation_file(fh.read())
    return db.load(name, schema, rows)
