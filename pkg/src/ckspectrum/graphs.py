"""Bipartite multigraphs built from even cycles and their contractions.

The central objects are 2k-cycles with vertex classes W = {w_1..w_k} and
V = {v_1..v_k} (w_i adjacent to v_{i-1} and v_i, indices mod k), the
multigraphs obtained by collapsing the blocks of a partition on either
class, and the block structure of the results: maximal 2-connected pieces
merged whenever they share a W-vertex, glued at separating V-vertices.

Admissible graphs (every W-degree even, every V-degree exactly 2, blocks
arranged in a tree) are the ones whose closed-path counts survive the
large-dimension limit; their blocks admit a finite catalogue of covering
subset families enumerated here by backtracking.
"""

import itertools
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType

from .partitions import Partition, is_noncrossing, noncrossing_links

DECOMPOSITION_CAP = 8


class DecompositionCapError(ValueError):
    """Raised when a block is too large for decomposition enumeration."""


def _nat(label):
    # natural-ish sort key: groups by length so "w2" < "w10"
    return (len(label), label)


class BipartiteMultigraph:
    """Undirected bipartite multigraph with string-labeled vertices.

    Vertex order is preserved from construction; equality and hashing
    ignore it and compare the two vertex sets and the multiplicity map.
    ``provenance`` maps merged labels back to the originals they absorbed.
    """

    __slots__ = ("w_ids", "v_ids", "_edges", "_deg", "_adj", "provenance")

    def __init__(self, w_ids, v_ids, edges, provenance=None):
        w_ids = tuple(w_ids)
        v_ids = tuple(v_ids)
        if len(set(w_ids)) != len(w_ids) or len(set(v_ids)) != len(v_ids):
            raise ValueError("duplicate vertex labels")
        if set(w_ids) & set(v_ids):
            raise ValueError("vertex classes must be disjoint")
        wset, vset = set(w_ids), set(v_ids)
        deg = {x: 0 for x in w_ids + v_ids}
        adj = {x: [] for x in w_ids + v_ids}
        clean = {}
        for (w, v), m in edges.items():
            if w not in wset or v not in vset:
                raise ValueError(f"edge ({w}, {v}) has an unknown endpoint")
            m = int(m)
            if m < 1:
                raise ValueError("edge multiplicity must be positive")
            clean[(w, v)] = m
            deg[w] += m
            deg[v] += m
            adj[w].append(v)
            adj[v].append(w)
        self.w_ids = w_ids
        self.v_ids = v_ids
        self._edges = clean
        self._deg = deg
        self._adj = adj
        self.provenance = dict(provenance or {})

    @property
    def edges(self):
        return MappingProxyType(self._edges)

    def degree(self, x):
        return self._deg[x]

    def neighbors(self, x):
        return tuple(self._adj[x])

    def total_edges(self):
        return sum(self._edges.values())

    def is_connected(self):
        verts = self.w_ids + self.v_ids
        if not verts:
            return True
        seen = {verts[0]}
        frontier = [verts[0]]
        while frontier:
            x = frontier.pop()
            for y in self._adj[x]:
                if y not in seen:
                    seen.add(y)
                    frontier.append(y)
        return len(seen) == len(verts)

    def _key(self):
        return (
            frozenset(self.w_ids),
            frozenset(self.v_ids),
            frozenset(self._edges.items()),
        )

    def __eq__(self, other):
        if not isinstance(other, BipartiteMultigraph):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"BipartiteMultigraph(|W|={len(self.w_ids)}, |V|={len(self.v_ids)}, "
            f"edges={self.total_edges()})"
        )


def cycle_graph(k):
    """The 2k-cycle: w_i ~ v_i and w_{i+1} ~ v_i, indices wrapping.

    k = 1 degenerates to a single doubled edge w_1 = v_1 = w_1.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    edges = defaultdict(int)
    for i in range(1, k + 1):
        edges[(f"w{i}", f"v{i}")] += 1
        edges[(f"w{i % k + 1}", f"v{i}")] += 1
    return BipartiteMultigraph(
        tuple(f"w{i}" for i in range(1, k + 1)),
        tuple(f"v{i}" for i in range(1, k + 1)),
        dict(edges),
    )


def _label_map(ids, partition, tilde_prefix):
    """Map 1-based positions to post-contraction labels.

    Blocks of size >= 2 become fresh tilde labels numbered by smallest
    member; singleton blocks keep the original label.
    """
    blocks = sorted(partition.blocks, key=min)
    label = {}
    order = []
    prov = {}
    t = 0
    for blk in blocks:
        if len(blk) >= 2:
            t += 1
            name = f"{tilde_prefix}{t}"
            prov[name] = tuple(sorted((ids[j - 1] for j in blk), key=_nat))
        else:
            name = ids[min(blk) - 1]
        order.append(name)
        for j in blk:
            label[j] = name
    return label, order, prov


def quotient(g, pi, mu):
    """Collapse V-blocks of pi and W-blocks of mu to single vertices.

    Partitions index vertices by position in g.v_ids / g.w_ids (1-based);
    pass None for no contraction on that side. Edge multiplicities add up,
    so degrees are conserved.
    """
    n_v, n_w = len(g.v_ids), len(g.w_ids)
    if pi is None:
        pi = Partition.from_blocks(n_v, [{i} for i in range(1, n_v + 1)])
    if mu is None:
        mu = Partition.from_blocks(n_w, [{i} for i in range(1, n_w + 1)])
    if pi.ground_size != n_v or mu.ground_size != n_w:
        raise ValueError("partition sizes must match the vertex classes")
    vlab, vorder, vprov = _label_map(g.v_ids, pi, "v~")
    wlab, worder, wprov = _label_map(g.w_ids, mu, "w~")
    vpos = {v: i + 1 for i, v in enumerate(g.v_ids)}
    wpos = {w: i + 1 for i, w in enumerate(g.w_ids)}
    edges = defaultdict(int)
    for (w, v), m in g.edges.items():
        edges[(wlab[wpos[w]], vlab[vpos[v]])] += m
    return BipartiteMultigraph(worder, vorder, dict(edges), {**vprov, **wprov})


def induced_subgraph(g, w_subset):
    """Subgraph on a W-subset carrying every edge incident to it.

    V-vertices are the neighbors of the subset, so degrees of the kept
    W-vertices are unchanged.
    """
    w_subset = frozenset(w_subset)
    if not w_subset:
        raise ValueError("empty W-subset")
    if not w_subset <= set(g.w_ids):
        raise ValueError("subset contains unknown W-vertices")
    edges = {(w, v): m for (w, v), m in g.edges.items() if w in w_subset}
    touched = {v for (_, v) in edges}
    return BipartiteMultigraph(
        tuple(w for w in g.w_ids if w in w_subset),
        tuple(v for v in g.v_ids if v in touched),
        edges,
        g.provenance,
    )


@dataclass(frozen=True)
class SubsetFamily:
    """A family of W-subsets of a parent graph."""

    parent: BipartiteMultigraph
    subsets: tuple

    def __post_init__(self):
        wset = set(self.parent.w_ids)
        object.__setattr__(
            self, "subsets", tuple(frozenset(s) for s in self.subsets)
        )
        for s in self.subsets:
            if not s:
                raise ValueError("empty subset in family")
            if not s <= wset:
                raise ValueError("subset contains unknown W-vertices")

    def graphs(self):
        return [induced_subgraph(self.parent, s) for s in self.subsets]

    def common_w(self):
        """W-vertices belonging to at least two subsets."""
        counts = defaultdict(int)
        for s in self.subsets:
            for w in s:
                counts[w] += 1
        return frozenset(w for w, c in counts.items() if c >= 2)

    def common_v(self):
        """V-vertices touched by at least two of the induced subgraphs."""
        counts = defaultdict(int)
        for gr in self.graphs():
            for v in gr.v_ids:
                counts[v] += 1
        return frozenset(v for v, c in counts.items() if c >= 2)


def merge_family(family):
    """Fuse subsets with overlapping W-sets until all are W-disjoint.

    Subsets meeting only in V stay separate. Every subset must induce a
    connected subgraph. Returns (merged subsets, their induced graphs),
    ordered by smallest W-label.
    """
    g = family.parent
    subs = list(family.subsets)
    for s in subs:
        if not induced_subgraph(g, s).is_connected():
            raise ValueError(f"subset {sorted(s, key=_nat)} induces a disconnected graph")
    parent = list(range(len(subs)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(subs)), 2):
        if subs[i] & subs[j]:
            parent[find(i)] = find(j)
    groups = defaultdict(frozenset)
    for i, s in enumerate(subs):
        groups[find(i)] |= s
    merged = sorted(groups.values(), key=lambda s: _nat(min(s, key=_nat)))
    return merged, [induced_subgraph(g, s) for s in merged]


def rho(g):
    """Cycle rank |W| + |V| - |E|/2 - 1 of a connected graph, exact."""
    if not g.is_connected():
        raise ValueError("rho is defined for connected graphs")
    return (
        Fraction(len(g.w_ids) + len(g.v_ids))
        - Fraction(g.total_edges(), 2)
        - 1
    )


def _biconnected_components(g):
    """Edge partition into maximal 2-connected pieces (multigraph-aware).

    Parallel edges carry distinct ids so a doubled edge forms its own
    2-connected pair. Returns a list of vertex-label sets.
    """
    endpoints = []
    adj = defaultdict(list)
    for (w, v), m in g.edges.items():
        for _ in range(m):
            eid = len(endpoints)
            endpoints.append((w, v))
            adj[w].append((v, eid))
            adj[v].append((w, eid))
    disc, low = {}, {}
    comps = []
    counter = 0
    estack = []
    for root in g.w_ids + g.v_ids:
        if root in disc:
            continue
        disc[root] = low[root] = counter
        counter += 1
        dfs = [(root, None, iter(adj[root]))]
        while dfs:
            u, pe, it = dfs[-1]
            moved = False
            for x, eid in it:
                if eid == pe:
                    continue
                if x not in disc:
                    estack.append(eid)
                    disc[x] = low[x] = counter
                    counter += 1
                    dfs.append((x, eid, iter(adj[x])))
                    moved = True
                    break
                if disc[x] < disc[u]:
                    estack.append(eid)
                    low[u] = min(low[u], disc[x])
            if moved:
                continue
            dfs.pop()
            if dfs:
                par = dfs[-1][0]
                low[par] = min(low[par], low[u])
                if low[u] >= disc[par]:
                    comp = set()
                    while True:
                        eid = estack.pop()
                        comp.update(endpoints[eid])
                        if eid == pe:
                            break
                    comps.append(comp)
    return comps


@dataclass(frozen=True)
class BlockDecomposition:
    blocks: tuple
    separating_vertices: tuple
    is_block_tree: bool
    admissible: bool
    R: int
    S: int


def classify(g):
    """Block structure and admissibility of a connected graph.

    2-connected pieces sharing a W-vertex are merged into one block;
    distinct blocks can then meet only at single V-vertices, the
    separating vertices. The graph is admissible when the block/vertex
    incidence structure is a tree and, inside every block, W-degrees are
    even and V-degrees are exactly 2.
    """
    if not g.is_connected():
        raise ValueError("classify expects a connected graph")
    comps = _biconnected_components(g)
    wset = set(g.w_ids)
    parent = list(range(len(comps)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for i, comp in enumerate(comps):
        for w in comp & wset:
            if w in owner:
                parent[find(i)] = find(owner[w])
            owner[w] = find(i)
    groups = defaultdict(set)
    for i, comp in enumerate(comps):
        groups[find(i)] |= comp
    block_ws = sorted(
        (frozenset(vs & wset) for vs in groups.values()),
        key=lambda s: _nat(min(s, key=_nat)),
    )
    blocks = tuple(induced_subgraph(g, bw) for bw in block_ws)
    vcount = defaultdict(int)
    for b in blocks:
        for v in b.v_ids:
            vcount[v] += 1
    seps = tuple(sorted((v for v, c in vcount.items() if c >= 2), key=_nat))
    incidences = sum(1 for b in blocks for v in b.v_ids if vcount[v] >= 2)
    tree = incidences == len(blocks) + len(seps) - 1
    adm = tree and all(
        all(b.degree(w) % 2 == 0 for w in b.w_ids)
        and all(b.degree(v) == 2 for v in b.v_ids)
        for b in blocks
    )
    r = sum(1 for b in blocks if len(b.w_ids) >= 2)
    s = sum(1 for b in blocks if len(b.w_ids) == 1)
    return BlockDecomposition(blocks, seps, tree, adm, r, s)


def _common_w_count(subsets):
    counts = defaultdict(int)
    for s in subsets:
        for w in s:
            counts[w] += 1
    return sum(1 for c in counts.values() if c >= 2)


def enumerate_admissible_decompositions(g, w_block):
    """All covering families of a block's W-set meeting the overlap rules.

    A family consists of distinct W-subsets of size >= 2 inducing
    connected subgraphs such that: the subsets cover the block; when there
    are several, each meets another one; every V-vertex of the block has
    degree >= 2 inside some member; and every sub-collection of kappa >= 2
    members shares at most kappa - 1 W-vertices overall. The one-member
    family {W_block} qualifies whenever the block itself does.
    """
    w_block = frozenset(w_block)
    if not w_block <= set(g.w_ids):
        raise ValueError("unknown W-vertices in block")
    if len(w_block) > DECOMPOSITION_CAP:
        raise DecompositionCapError(
            f"block has {len(w_block)} W-vertices; cap is {DECOMPOSITION_CAP}"
        )
    block_graph = induced_subgraph(g, w_block)
    v_all = block_graph.v_ids
    budget = rho(block_graph)

    ordered = sorted(w_block, key=_nat)
    cands = []
    for r in range(2, len(ordered) + 1):
        for combo in itertools.combinations(ordered, r):
            s = frozenset(combo)
            sub = induced_subgraph(g, s)
            if sub.is_connected():
                vdeg = {v: sub.degree(v) for v in sub.v_ids}
                cands.append((s, vdeg))
    cands.sort(key=lambda c: (_nat(min(c[0], key=_nat)), len(c[0]), sorted(map(_nat, c[0]))))
    suffix_union = [frozenset()] * (len(cands) + 1)
    for i in range(len(cands) - 1, -1, -1):
        suffix_union[i] = suffix_union[i + 1] | cands[i][0]

    results = []

    def admit(chosen, new):
        # every sub-collection through the new subset obeys the W-overlap cap
        for r in range(1, len(chosen) + 1):
            for sub in itertools.combinations(chosen, r):
                if _common_w_count([s for s, _ in sub] + [new]) > r:
                    return False
        return True

    def leaf_ok(chosen):
        covered = frozenset().union(*(s for s, _ in chosen))
        if covered != w_block:
            return False
        if len(chosen) >= 2:
            for s, _ in chosen:
                if not any(s & t for t, _ in chosen if t is not s):
                    return False
        for v in v_all:
            if not any(vd.get(v, 0) >= 2 for _, vd in chosen):
                return False
        return True

    def walk(idx, chosen, covered, spent):
        if leaf_ok(chosen):
            results.append(tuple(sorted((s for s, _ in chosen),
                                        key=lambda s: (_nat(min(s, key=_nat)), len(s)))))
        if idx == len(cands):
            return
        if not (covered | suffix_union[idx]) >= w_block:
            return
        uncovered = len(w_block - covered)
        if uncovered > 2 * (budget - spent):
            return
        for i in range(idx, len(cands)):
            s, vdeg = cands[i]
            cost = len(s) - 1
            if spent + cost > budget:
                continue
            if not admit(chosen, s):
                continue
            chosen.append((s, vdeg))
            walk(i + 1, chosen, covered | s, spent + cost)
            chosen.pop()

    walk(0, [], frozenset(), 0)
    uniq = sorted(set(results), key=lambda f: (len(f), [sorted(map(_nat, s)) for s in f]))
    return [SubsetFamily(g, f) for f in uniq]


def w_pi_subsets(k, pi):
    """Grouping of w_1..w_k induced by a noncrossing partition on V.

    Each pair of cyclically consecutive elements a < c of a block opens a
    gap (a, c]; w_j joins the innermost gap containing it, and the w_j
    contained in no gap form one leftover group. Groups of size >= 2 come
    first (by smallest index), then the singletons.
    """
    if pi.ground_size != k:
        raise ValueError("partition size mismatch")
    if not is_noncrossing(pi):
        raise ValueError("requires a noncrossing partition")
    gaps = []
    for blk in pi.blocks:
        elems = sorted(blk)
        gaps.extend(zip(elems, elems[1:]))
    groups = defaultdict(set)
    leftover = set()
    for j in range(1, k + 1):
        containing = [(a, c) for (a, c) in gaps if a < j <= c]
        if containing:
            groups[max(containing)].add(j)
        else:
            leftover.add(j)
    all_groups = list(groups.values()) + [leftover]
    out = [frozenset(f"w{j}" for j in grp) for grp in all_groups]
    large = sorted((s for s in out if len(s) >= 2), key=lambda s: min(int(w[1:]) for w in s))
    small = sorted((s for s in out if len(s) == 1), key=lambda s: min(int(w[1:]) for w in s))
    return large + small


def w_mu_finest(k, mu):
    """Finest closed-path grouping of the contracted w-vertices.

    The unobstructed nearest-neighbor links of mu act as noncrossing
    chords on positions 1..k. Each chord contributes the labels of the
    positions it encloses that no nested chord claims (endpoints
    included); positions inside no chord form the leftover group. Merged
    blocks are written w~t in order of smallest member. The list can
    repeat a subset; groups of size >= 2 come first.
    """
    if mu.ground_size != k:
        raise ValueError("partition size mismatch")
    chords = sorted(noncrossing_links(mu))
    for (a, b), (c, d) in itertools.combinations(chords, 2):
        crossing = (a < c < b < d and c != a and b != d) or (c < a < d < b)
        if crossing:
            raise AssertionError("links of a partition should never cross")
    label = {}
    t = 0
    minidx = {}
    for blk in sorted(mu.blocks, key=min):
        if len(blk) >= 2:
            t += 1
            name = f"w~{t}"
        else:
            name = f"w{min(blk)}"
        minidx[name] = min(blk)
        for j in blk:
            label[j] = name

    def region(lo, hi, own):
        inner = [
            (a, b) for (a, b) in chords
            if (a, b) != own and lo <= a and b <= hi and b - a > 1
        ]
        keep = set()
        for j in range(lo, hi + 1):
            if not any(a < j < b for (a, b) in inner):
                keep.add(label[j])
        return frozenset(keep)

    subsets = [region(a, b, (a, b)) for (a, b) in chords]
    outer = [
        label[j]
        for j in range(1, k + 1)
        if not any(a < j < b for (a, b) in chords)
    ]
    subsets.append(frozenset(outer))
    key = lambda s: (min(minidx[x] for x in s), sorted(map(_nat, s)))
    large = sorted((s for s in subsets if len(s) >= 2), key=key)
    small = sorted((s for s in subsets if len(s) == 1), key=key)
    return large + small


def to_dot(g):
    """Graphviz dot text for eyeballing a graph."""
    lines = ["graph {"]
    for w in g.w_ids:
        lines.append(f'  "{w}" [shape=box];')
    for v in g.v_ids:
        lines.append(f'  "{v}" [shape=circle];')
    for (w, v), m in sorted(g.edges.items()):
        tag = f' [label="{m}"]' if m > 1 else ""
        lines.append(f'  "{w}" -- "{v}"{tag};')
    lines.append("}")
    return "\n".join(lines)
