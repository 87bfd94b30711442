"""One-pass BIRCH clustering-feature tree over project summary vectors.

Summary vectors are min-max scaled per dimension before insertion; the
bounds are kept on the tree so that new projects are routed consistently.
A "cluster" at level ``l`` is the set of projects under one entry of a node
at node-depth ``l - 1``; level 0 is the whole tree and level ``depth`` holds
the leaf entries (the leaf clusters).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import SummaryVector
from .errors import DimensionMismatch, EmptyInput, LevelOutOfRange, ValidationError

FORMAT_VERSION = 1
RADIUS_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class CFEntry:
    """Clustering feature: (count, linear sum, sum of squared norms)."""

    n: int
    linear_sum: np.ndarray
    square_sum: float

    def __post_init__(self):
        ls = np.array(self.linear_sum, dtype=float)
        ls.setflags(write=False)
        object.__setattr__(self, "linear_sum", ls)
        if self.n < 1:
            raise ValidationError("a CF entry summarizes at least one vector")

    @classmethod
    def from_point(cls, x) -> "CFEntry":
        x = np.asarray(x, dtype=float)
        return cls(1, x, float(x @ x))

    @classmethod
    def from_points(cls, points) -> "CFEntry":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(len(pts), pts.sum(axis=0), float((pts * pts).sum()))

    @property
    def centroid(self) -> np.ndarray:
        return self.linear_sum / self.n

    @property
    def dim(self) -> int:
        return self.linear_sum.shape[0]


def cf_merge(a: CFEntry, b: CFEntry) -> CFEntry:
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot merge {a.dim}-d and {b.dim}-d entries")
    return CFEntry(a.n + b.n, a.linear_sum + b.linear_sum, a.square_sum + b.square_sum)


def _radius(n, ls, ss) -> float:
    c = ls / n
    return float(np.sqrt(max(0.0, ss / n - float(c @ c))))


def cf_radius(e: CFEntry) -> float:
    return _radius(e.n, e.linear_sum, e.square_sum)


# --------------------------------------------------------------------------- frozen tree

@dataclass(frozen=True, eq=False)
class CFSlot:
    """One entry of a node: its CF plus either a child node or leaf members."""

    cf: CFEntry
    child: "CFNode | None" = None
    members: tuple = ()


@dataclass(frozen=True, eq=False)
class CFNode:
    entries: tuple
    is_leaf: bool

    @property
    def cf(self) -> CFEntry:
        out = self.entries[0].cf
        for s in self.entries[1:]:
            out = cf_merge(out, s.cf)
        return out


def _members(slot: CFSlot) -> list:
    if slot.child is None:
        return list(slot.members)
    out = []
    for s in slot.child.entries:
        out.extend(_members(s))
    return out


@dataclass(frozen=True, eq=False)
class ClusterTree:
    root: CFNode
    branching_factor: int
    threshold: float
    lower: np.ndarray
    upper: np.ndarray
    member_index: dict
    order: tuple  # insertion order of project ids

    @property
    def depth(self) -> int:
        d, node = 1, self.root
        while not node.is_leaf:
            node = node.entries[0].child
            d += 1
        return d

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def n_projects(self) -> int:
        return len(self.member_index)

    def normalize(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected {self.dim} features, got {v.shape[-1]}")
        span = self.upper - self.lower
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (v - self.lower) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def node_at(self, cluster_id: tuple) -> CFNode:
        """Node whose entries are the children of ``cluster_id``."""
        node = self.root
        for i in cluster_id:
            if node.is_leaf:
                raise LevelOutOfRange(f"cluster {cluster_id} is below the leaf level")
            node = node.entries[i].child
        return node

    def slot_at(self, cluster_id: tuple) -> CFSlot:
        if not cluster_id:
            raise ValidationError("the root is not an entry")
        return self.node_at(cluster_id[:-1]).entries[cluster_id[-1]]

    def members(self, cluster_id: tuple) -> list:
        if not cluster_id:
            return list(self.order_by_tree())
        return _members(self.slot_at(cluster_id))

    def order_by_tree(self) -> list:
        out = []
        for s in self.root.entries:
            out.extend(_members(s))
        return out

    def cluster_ids(self, level: int) -> list[tuple]:
        if not 0 <= level <= self.depth:
            raise LevelOutOfRange(f"level {level} outside 0..{self.depth}")
        ids = [()]
        for _ in range(level):
            nxt = []
            for cid in ids:
                node = self.node_at(cid)
                nxt.extend(cid + (i,) for i in range(len(node.entries)))
            ids = nxt
        return ids

    def children(self, cluster_id: tuple) -> list[tuple]:
        if len(cluster_id) >= self.depth:
            raise LevelOutOfRange(f"leaf cluster {cluster_id} has no children")
        node = self.node_at(cluster_id)
        return [cluster_id + (i,) for i in range(len(node.entries))]

    def leaf_clusters(self) -> list[list]:
        return clusters_at_level(self, self.depth)

    def leaf_slots(self) -> list[CFSlot]:
        return [self.slot_at(c) for c in self.cluster_ids(self.depth)]

    # --- persistence
    def to_json(self) -> dict:
        def node(n: CFNode) -> dict:
            return {
                "is_leaf": n.is_leaf,
                "entries": [
                    {
                        "n": s.cf.n,
                        "linear_sum": s.cf.linear_sum.tolist(),
                        "square_sum": s.cf.square_sum,
                        **({"members": list(s.members)} if s.child is None else {"child": node(s.child)}),
                    }
                    for s in n.entries
                ],
            }

        return {
            "format_version": FORMAT_VERSION,
            "branching_factor": self.branching_factor,
            "threshold": self.threshold,
            "bounds": {"lower": self.lower.tolist(), "upper": self.upper.tolist()},
            "order": list(self.order),
            "member_index": {k: list(v) for k, v in self.member_index.items()},
            "root": node(self.root),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ClusterTree":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported tree format_version {d.get('format_version')!r}")

        def node(nd: dict) -> CFNode:
            slots = []
            for e in nd["entries"]:
                cf = CFEntry(e["n"], np.array(e["linear_sum"], dtype=float), e["square_sum"])
                if "child" in e:
                    slots.append(CFSlot(cf, child=node(e["child"])))
                else:
                    slots.append(CFSlot(cf, members=tuple(e["members"])))
            return CFNode(tuple(slots), nd["is_leaf"])

        return cls(
            node(d["root"]),
            d["branching_factor"],
            d["threshold"],
            _ro(d["bounds"]["lower"]),
            _ro(d["bounds"]["upper"]),
            {k: tuple(v) for k, v in d["member_index"].items()},
            tuple(d["order"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# --------------------------------------------------------------------------- construction

class _Entry:
    __slots__ = ("n", "ls", "ss", "child", "members")

    def __init__(self, n, ls, ss, child=None, members=None):
        self.n = n
        self.ls = ls
        self.ss = ss
        self.child = child
        self.members = members

    def centroid(self):
        return self.ls / self.n


class _Node:
    __slots__ = ("entries", "is_leaf")

    def __init__(self, entries, is_leaf):
        self.entries = entries
        self.is_leaf = is_leaf


def _summed(node: _Node, child) -> _Entry:
    n = sum(e.n for e in node.entries)
    ls = np.sum([e.ls for e in node.entries], axis=0)
    ss = float(sum(e.ss for e in node.entries))
    return _Entry(n, ls, ss, child=child)


def _nearest(entries, x) -> int:
    best, best_d = 0, np.inf
    for i, e in enumerate(entries):
        d = e.centroid() - x
        d = float(d @ d)
        if d < best_d:
            best, best_d = i, d
    return best


def _split_entries(entries):
    """Farthest-pair seeding; the rest join the nearer seed (ties to the first)."""
    cents = [e.centroid() for e in entries]
    si, sj, far = 0, 1, -1.0
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            d = cents[i] - cents[j]
            d = float(d @ d)
            if d > far:
                si, sj, far = i, j, d
    left, right = [], []
    for k, e in enumerate(entries):
        if k == si:
            left.append(e)
        elif k == sj:
            right.append(e)
        else:
            di = cents[k] - cents[si]
            dj = cents[k] - cents[sj]
            (left if float(di @ di) <= float(dj @ dj) else right).append(e)
    return left, right


class _Builder:
    def __init__(self, branching_factor, threshold):
        self.B = branching_factor
        self.T = threshold
        self.root = _Node([], True)

    def insert(self, x, pid):
        path = []  # (node, entry index) pairs for non-leaf levels
        node = self.root
        while not node.is_leaf:
            i = _nearest(node.entries, x)
            path.append((node, i))
            node = node.entries[i].child
        xx = float(x @ x)
        absorbed = False
        if node.entries:
            i = _nearest(node.entries, x)
            e = node.entries[i]
            if _radius(e.n + 1, e.ls + x, e.ss + xx) <= self.T:
                e.n += 1
                e.ls = e.ls + x
                e.ss += xx
                e.members.append(pid)
                absorbed = True
        if not absorbed:
            node.entries.append(_Entry(1, x.copy(), xx, members=[pid]))
        for pnode, i in path:
            e = pnode.entries[i]
            e.n += 1
            e.ls = e.ls + x
            e.ss += xx
        self._fix_overflow(node, path)

    def _fix_overflow(self, node, path):
        while len(node.entries) > self.B:
            left, right = _split_entries(node.entries)
            a = _Node(left, node.is_leaf)
            b = _Node(right, node.is_leaf)
            if not path:
                self.root = _Node([_summed(a, a), _summed(b, b)], False)
                return
            parent, i = path.pop()
            parent.entries[i:i + 1] = [_summed(a, a), _summed(b, b)]
            node = parent

    def freeze(self) -> CFNode:
        def conv(n: _Node) -> CFNode:
            slots = []
            for e in n.entries:
                cf = CFEntry(e.n, e.ls, e.ss)
                if n.is_leaf:
                    slots.append(CFSlot(cf, members=tuple(e.members)))
                else:
                    slots.append(CFSlot(cf, child=conv(e.child)))
            return CFNode(tuple(slots), n.is_leaf)

        return conv(self.root)


def _index(node: CFNode, prefix=()) -> dict:
    out = {}
    for i, s in enumerate(node.entries):
        if s.child is None:
            for m in s.members:
                out[m] = prefix + (i,)
        else:
            out.update(_index(s.child, prefix + (i,)))
    return out


def build_tree(vectors: Sequence[SummaryVector], branching_factor: int = 20,
               threshold: float = 0.5) -> ClusterTree:
    """Insert min-max scaled summary vectors one at a time, in list order."""
    if not vectors:
        raise EmptyInput("no summary vectors to cluster")
    if branching_factor < 2:
        raise ValidationError("branching factor must be at least 2")
    if threshold < 0:
        raise ValidationError("threshold must be non-negative")
    dims = {v.values.shape[0] for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"summary vectors have mixed dimensions {sorted(dims)}")
    ids = [v.project_id for v in vectors]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate project ids")
    X = np.vstack([v.values for v in vectors])
    lower, upper = X.min(axis=0), X.max(axis=0)
    span = upper - lower
    Z = np.where(span > 0, (X - lower) / np.where(span > 0, span, 1.0), 0.0)
    b = _Builder(branching_factor, threshold)
    for z, pid in zip(Z, ids):
        b.insert(z, pid)
    root = b.freeze()
    return ClusterTree(root, branching_factor, float(threshold), _ro(lower), _ro(upper),
                       _index(root), tuple(ids))


def clusters_at_level(tree: ClusterTree, level: int) -> list[list]:
    return [tree.members(c) for c in tree.cluster_ids(level)]


def descend(tree: ClusterTree, v) -> tuple:
    """Nearest-centroid path from the root to a leaf entry (entry indices)."""
    values = v.values if isinstance(v, SummaryVector) else v
    z = tree.normalize(values)
    path, node = [], tree.root
    while True:
        i = _nearest_slot(node.entries, z)
        path.append(i)
        if node.is_leaf:
            return tuple(path)
        node = node.entries[i].child


def _nearest_slot(slots, z) -> int:
    best, best_d = 0, np.inf
    for i, s in enumerate(slots):
        d = s.cf.centroid - z
        d = float(d @ d)
        if d < best_d:
            best, best_d = i, d
    return best


def iter_nodes(tree: ClusterTree):
    stack = [tree.root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(s.child for s in n.entries if s.child is not None)


def load_tree(path) -> ClusterTree:
    with open(path, encoding="utf-8") as fh:
        return ClusterTree.from_json(json.load(fh))


def save_tree(tree: ClusterTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(tree.dumps())
