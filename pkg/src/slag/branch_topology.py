"""Link determinants, double branched covers and Betti-number obstructions.

Everything here is exact: Python integers for Smith normal forms and GF(2)
elimination for the transfer sequence.  Diagrams are PD codes: each crossing
X[a, b, c, d] lists its four edge labels counterclockwise starting from the
incoming under-strand.
"""

import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


class ParseError(ValueError):
    pass


class DataError(ValueError):
    pass


# --------------------------------------------------------------- diagrams

@dataclass
class LinkDiagram:
    pd: List[Tuple[int, int, int, int]]
    name: str = ""
    faces: List[List[Tuple[int, int]]] = field(default_factory=list, repr=False)
    colors: List[int] = field(default_factory=list, repr=False)
    empty_components: int = 0

    @property
    def n_crossings(self):
        return len(self.pd)

    def components(self):
        if not self.pd:
            return max(1, self.empty_components)
        parent = {}

        def find(a):
            while parent.setdefault(a, a) != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b, c, d in self.pd:
            parent[find(a)] = find(c)
            parent[find(b)] = find(d)
        return len({find(a) for x in self.pd for a in x}) + self.empty_components


def parse_pd(text):
    """Accept 'X[1,5,2,4] X[3,1,4,6]', 'X(1,5,2,4)...' or a list of 4-tuples."""
    if isinstance(text, str):
        groups = re.findall(r"X\s*[\[(]([^\])]*)[\])]", text)
        stripped = re.sub(r"X\s*[\[(][^\])]*[\])]", "", text)
        if stripped.strip(" ,;\n\t[]()PD"):
            raise ParseError(f"unrecognised PD text: {stripped.strip()!r}")
        crossings = []
        for g in groups:
            try:
                t = tuple(int(v) for v in g.replace(" ", "").split(","))
            except ValueError as exc:
                raise ParseError(f"bad crossing {g!r}") from exc
            crossings.append(t)
    else:
        crossings = [tuple(int(v) for v in x) for x in text]
    for x in crossings:
        if len(x) != 4:
            raise ParseError(f"crossing {x} does not have 4 labels")
    counts = {}
    for x in crossings:
        for a in x:
            counts[a] = counts.get(a, 0) + 1
    bad = sorted(a for a, c in counts.items() if c != 2)
    if bad:
        raise ParseError(f"labels {bad} do not appear exactly twice")
    return crossings


def make_diagram(pd, name=""):
    d = LinkDiagram(parse_pd(pd), name)
    if d.pd:
        d.faces = _faces(d.pd)
        V, E, F = len(d.pd), 2 * len(d.pd), len(d.faces)
        if V - E + F != 2:
            raise ParseError(f"diagram is not connected and planar (V-E+F = {V - E + F})")
        d.colors = _checkerboard(d.pd, d.faces)
    return d


def unknot():
    return LinkDiagram([], "unknot")


def _other_end(pd, c, p):
    a = pd[c][p]
    for c2, x in enumerate(pd):
        for p2, b in enumerate(x):
            if b == a and (c2, p2) != (c, p):
                return c2, p2
    raise ParseError(f"label {a} has no partner")


def _faces(pd):
    """Faces as cycles of corners (c, p): the corner between positions p and p+1.

    Walking out of c along position p+1 keeps the face on the right; arriving
    at (c', p') the face sits between p' and p'+1 again.
    """
    seen = set()
    faces = []
    for c in range(len(pd)):
        for p in range(4):
            if (c, p) in seen:
                continue
            cyc = []
            cur = (c, p)
            while cur not in seen:
                seen.add(cur)
                cyc.append(cur)
                cur = _other_end(pd, cur[0], (cur[1] + 1) % 4)
            if cur != (c, p):
                raise ParseError("inconsistent face structure")
            faces.append(cyc)
    return faces


def _checkerboard(pd, faces):
    corner_face = {cr: i for i, f in enumerate(faces) for cr in f}
    adj = [set() for _ in faces]
    for c in range(len(pd)):
        for p in range(4):
            f1 = corner_face[(c, p)]
            f2 = corner_face[(c, (p + 1) % 4)]
            adj[f1].add(f2)
            adj[f2].add(f1)
    colors = [-1] * len(faces)
    colors[0] = 0
    stack = [0]
    while stack:
        f = stack.pop()
        for g in adj[f]:
            if colors[g] < 0:
                colors[g] = 1 - colors[f]
                stack.append(g)
            elif colors[g] == colors[f]:
                raise ParseError("faces are not two-colourable")
    return colors


def goeritz_matrix(d, white=0):
    """Reduced Goeritz matrix on the faces of colour ``white`` (last white face dropped).

    At each crossing the two white corners are (0, 2) or (1, 3); the sign is +1
    when the white corners are the ones swept by rotating the over-strand
    counterclockwise (corners 1 and 3), else -1.
    """
    if isinstance(d, (str, list)):
        d = make_diagram(d)
    if not d.pd:
        return []
    white_faces = [i for i, c in enumerate(d.colors) if c == white]
    idx = {f: k for k, f in enumerate(white_faces)}
    corner_face = {cr: i for i, f in enumerate(d.faces) for cr in f}
    m = len(white_faces)
    G = [[0] * m for _ in range(m)]
    for c in range(len(d.pd)):
        wc = [p for p in range(4) if d.colors[corner_face[(c, p)]] == white]
        eta = 1 if wc == [1, 3] else -1
        fa, fb = corner_face[(c, wc[0])], corner_face[(c, wc[1])]
        if fa == fb:
            continue
        i, j = idx[fa], idx[fb]
        G[i][j] -= eta
        G[j][i] -= eta
        G[i][i] += eta
        G[j][j] += eta
    return [row[:-1] for row in G[:-1]]


def smith_normal_form(M):
    """Diagonal of the Smith normal form (nonnegative, each dividing the next)."""
    A = [list(map(int, row)) for row in M]
    if not A or not A[0]:
        return []
    m, n = len(A), len(A[0])
    diag = []
    t = 0
    while t < min(m, n):
        nz = [(abs(A[i][j]), i, j) for i in range(t, m) for j in range(t, n) if A[i][j]]
        if not nz:
            break
        _, i0, j0 = min(nz)
        A[t], A[i0] = A[i0], A[t]
        for row in A:
            row[t], row[j0] = row[j0], row[t]
        while True:
            changed = False
            for i in range(t + 1, m):
                q = A[i][t] // A[t][t]
                if q:
                    A[i] = [a - q * b for a, b in zip(A[i], A[t])]
                if A[i][t]:
                    A[t], A[i] = A[i], A[t]
                    changed = True
            for j in range(t + 1, n):
                q = A[t][j] // A[t][t]
                if q:
                    for row in A:
                        row[j] -= q * row[t]
                if A[t][j]:
                    for row in A:
                        row[t], row[j] = row[j], row[t]
                    changed = True
            if changed:
                continue
            bad = [(i, j) for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % A[t][t]]
            if not bad:
                break
            i = bad[0][0]
            A[t] = [a + b for a, b in zip(A[t], A[i])]
        diag.append(abs(A[t][t]))
        t += 1
    diag += [0] * (min(m, n) - len(diag))
    return diag


def bareiss_det(M):
    """Exact integer determinant by fraction-free elimination."""
    A = [list(map(int, row)) for row in M]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            sw = next((i for i in range(k + 1, n) if A[i][k]), None)
            if sw is None:
                return 0
            A[k], A[sw] = A[sw], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[-1][-1]


def link_determinant(d):
    if isinstance(d, (str, list)):
        d = make_diagram(d)
    if not d.pd:
        return 1 if d.components() == 1 else 0
    G = goeritz_matrix(d)
    if not G:
        return 1
    diag = smith_normal_form(G)
    prod = 1
    for v in diag:
        prod *= v
    return prod


def coloring_determinant(d):
    """Independent route through the Fox colouring matrix (arcs by crossings)."""
    if isinstance(d, (str, list)):
        d = make_diagram(d)
    if not d.pd:
        return 1 if d.components() == 1 else 0
    parent = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            a = parent[a]
        return a

    for _, b, _, dd in d.pd:
        parent[find(b)] = find(dd)
    arcs = sorted({find(a) for x in d.pd for a in x})
    col = {a: i for i, a in enumerate(arcs)}
    M = [[0] * len(arcs) for _ in d.pd]
    for r, (a, b, c, _) in enumerate(d.pd):
        M[r][col[find(b)]] += 2
        M[r][col[find(a)]] -= 1
        M[r][col[find(c)]] -= 1
    # the colouring matrix presents H_1 of the cover plus one free summand
    diag = smith_normal_form(M)
    free = len(arcs) - sum(1 for v in diag if v)
    if free != 1:
        return 0
    prod = 1
    for v in diag:
        prod *= v or 1
    return prod


@dataclass
class CoverHomology:
    determinant: int
    torsion: List[int]
    b1: int
    order: Optional[int]
    b1_positive: bool

    def exceeds_base(self, b1_base=0):
        return self.b1 > b1_base


def double_cover_homology(d):
    """H_1 of the double branched cover, presented by the Goeritz matrix."""
    if isinstance(d, (str, list)):
        d = make_diagram(d)
    if not d.pd:
        b1 = d.components() - 1
        return CoverHomology(1 if b1 == 0 else 0, [], b1, 1 if b1 == 0 else None, b1 > 0)
    G = goeritz_matrix(d)
    diag = smith_normal_form(G) if G else []
    b1 = sum(1 for v in diag if v == 0)
    tors = [v for v in diag if v > 1]
    order = None
    if b1 == 0:
        order = 1
        for v in tors:
            order *= v
    det = 0 if b1 else order
    return CoverHomology(det, tors, b1, order, b1 > 0)


# ------------------------------------------------------- diagram builders

def braid_closure_pd(word, strands=None):
    """PD code of the closure of a braid word (generator i > 0: left strand under)."""
    if not word:
        raise ParseError("empty braid word")
    s = strands or (max(abs(g) for g in word) + 1)
    cur = list(range(1, s + 1))
    nxt = s + 1
    pd = []
    for g in word:
        i = abs(g) - 1
        if not 0 <= i < s - 1:
            raise ParseError(f"generator {g} out of range for {s} strands")
        x, y = cur[i], cur[i + 1]
        xo, yo = nxt, nxt + 1
        nxt += 2
        pd.append([x, y, xo, yo] if g > 0 else [y, xo, yo, x])
        cur[i], cur[i + 1] = yo, xo
    touched = {abs(g) - 1 for g in word} | {abs(g) for g in word}
    if len(touched) < s:
        raise ParseError("every strand must take part in a crossing")
    final = {cur[j]: j + 1 for j in range(s)}
    pd = [tuple(final.get(a, a) for a in x) for x in pd]
    return _relabel(pd)


def _relabel(pd):
    order = {}
    for x in pd:
        for a in x:
            order.setdefault(a, len(order) + 1)
    return [tuple(order[a] for a in x) for x in pd]


def r1_move(pd, edge_index=0, kind=0):
    """Insert a kink on the edge at (crossing, position) number ``edge_index``."""
    pd = [list(x) for x in pd]
    c, p = divmod(edge_index % (4 * len(pd)), 4)
    new = max(a for x in pd for a in x)
    a, loop, b = pd[c][p], new + 1, new + 2
    pd[c][p] = b
    forms = ([a, loop, loop, b], [a, b, loop, loop], [loop, a, b, loop], [loop, loop, b, a])
    pd.append(forms[kind % 4])
    return _relabel(pd)


def r2_move(pd, face_index=0, a_over=True):
    """Push one boundary edge of a face across another boundary edge of the same face."""
    pd = [list(x) for x in pd]
    faces = _faces([tuple(x) for x in pd])
    big = [f for f in faces if len(f) >= 2]
    face = big[face_index % len(big)]
    (ca, pa), (cb, pb) = face[0], face[1]
    pa, pb = (pa + 1) % 4, (pb + 1) % 4
    # walking out of (ca, pa) keeps the face on the right; its far end gets a_R.
    a_end = _other_end([tuple(x) for x in pd], ca, pa)
    a, b = pd[ca][pa], pd[cb][pb]
    new = max(v for x in pd for v in x)
    aM, aR, bM, bR = new + 1, new + 2, new + 3, new + 4
    pd[a_end[0]][a_end[1]] = aR
    # b is traversed with the face on its left starting from its far end,
    # so the near end (cb, pb) becomes b_R.
    pd[cb][pb] = bR
    aL, bL = a, b
    if a_over:
        pd.append([bL, aM, bM, aL])
        pd.append([bM, aM, bR, aR])
    else:
        pd.append([aL, bL, aM, bM])
        pd.append([aM, bR, aR, bM])
    return _relabel(pd)


# ------------------------------------------------------------ GF(2) algebra

def gf2_rank(M):
    A = np.array(M, dtype=np.uint8) & 1
    if A.size == 0:
        return 0
    A = A.copy()
    r = 0
    rows, cols = A.shape
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i, c]), None)
        if piv is None:
            continue
        A[[r, piv]] = A[[piv, r]]
        for i in range(rows):
            if i != r and A[i, c]:
                A[i] ^= A[r]
        r += 1
        if r == rows:
            break
    return r


def gf2_nullspace(M, ncols=None):
    A = np.array(M, dtype=np.uint8) & 1
    n = A.shape[1] if A.ndim == 2 and A.size else (ncols or 0)
    if A.size == 0:
        return np.eye(n, dtype=np.uint8)
    A = A.copy()
    rows = A.shape[0]
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, rows) if A[i, c]), None)
        if piv is None:
            continue
        A[[r, piv]] = A[[piv, r]]
        for i in range(rows):
            if i != r and A[i, c]:
                A[i] ^= A[r]
        pivots.append(c)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(n, dtype=np.uint8)
        v[f] = 1
        for i, pc in enumerate(pivots):
            v[pc] = A[i, f]
        basis.append(v)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), n).T


def gf2_solve(A, b):
    A = np.array(A, dtype=np.uint8) & 1
    b = np.array(b, dtype=np.uint8) & 1
    rows, cols = A.shape
    aug = np.concatenate([A, b[:, None]], 1)
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if aug[i, c]), None)
        if piv is None:
            continue
        aug[[r, piv]] = aug[[piv, r]]
        for i in range(rows):
            if i != r and aug[i, c]:
                aug[i] ^= aug[r]
        pivots.append(c)
        r += 1
    if np.any(aug[r:, -1]):
        raise DataError("boundary does not lie in the image of the transfer")
    x = np.zeros(cols, dtype=np.uint8)
    for i, pc in enumerate(pivots):
        x[pc] = aug[i, -1]
    return x


def _mat(rows, cols):
    return np.zeros((rows, cols), dtype=np.uint8)


# ------------------------------------------------------- cover complexes

@dataclass
class CoverComplex:
    """A double cover p: Lt -> L of cell complexes branched along a subcomplex.

    ``L_bd[k]`` and ``Lt_bd[k]`` are boundary matrices C_k -> C_{k-1} over GF(2),
    ``lifts[k][x]`` lists the cells of Lt over cell x of L (one for branch cells).
    """

    name: str
    dim: int
    L_cells: List[list]
    L_bd: List[np.ndarray]
    Lt_cells: List[list]
    Lt_bd: List[np.ndarray]
    lifts: List[List[List[int]]]
    branch: List[List[bool]]

    def projection(self, k):
        P = _mat(len(self.L_cells[k]), len(self.Lt_cells[k]))
        for x, ls in enumerate(self.lifts[k]):
            for y in ls:
                P[x, y] = 1
        return P

    def rel_index(self, k):
        return [x for x in range(len(self.L_cells[k])) if not self.branch[k][x]]

    def transfer(self, k):
        """C_k(L, Sigma) -> C_k(Lt): a cell goes to the sum of its two lifts."""
        rel = self.rel_index(k)
        T = _mat(len(self.Lt_cells[k]), len(rel))
        for j, x in enumerate(rel):
            for y in self.lifts[k][x]:
                T[y, j] ^= 1
        return T

    def transfer_full(self, k):
        """Transfer on all of C_k(L); cells of Sigma have one lift and go to 2 lift = 0."""
        T = _mat(len(self.Lt_cells[k]), len(self.L_cells[k]))
        for x, ls in enumerate(self.lifts[k]):
            if len(ls) == 2:
                for y in ls:
                    T[y, x] ^= 1
        return T

    def rel_bd(self, k):
        return self.L_bd[k][np.ix_(self.rel_index(k - 1), self.rel_index(k))]


def _bd_or_empty(bd, k, nk, nk1):
    if 1 <= k < len(bd) + 1 and k - 1 < len(bd) and bd[k - 1] is not None:
        return bd[k - 1]
    return _mat(nk1, nk)


def validate_cover(cx):
    for k in range(cx.dim + 1):
        for x, ls in enumerate(cx.lifts[k]):
            want = 1 if cx.branch[k][x] else 2
            if len(ls) != want:
                raise DataError(f"cell {cx.L_cells[k][x]} has {len(ls)} lifts, expected {want}")
        if sorted(y for ls in cx.lifts[k] for y in ls) != list(range(len(cx.Lt_cells[k]))):
            raise DataError(f"lifts of {k}-cells do not partition the cover")
    for k in range(2, cx.dim + 1):
        for bd in (cx.L_bd, cx.Lt_bd):
            if np.any((bd[k - 1].astype(int) @ bd[k].astype(int)) % 2):
                raise DataError("boundary of a boundary is nonzero")
    for k in range(1, cx.dim + 1):
        lhs = (cx.L_bd[k].astype(int) @ cx.projection(k).astype(int)) % 2
        rhs = (cx.projection(k - 1).astype(int) @ cx.Lt_bd[k].astype(int)) % 2
        if np.any(lhs != rhs):
            raise DataError("projection is not a chain map")


def _prep(cx):
    """Boundary matrices indexed so that bd[k]: C_k -> C_{k-1}, with zeros at the ends."""

    def ext(bd, cells):
        out = {}
        for k in range(cx.dim + 2):
            nk = len(cells[k]) if k <= cx.dim else 0
            nk1 = len(cells[k - 1]) if 1 <= k <= cx.dim + 1 else 0
            if 1 <= k <= cx.dim:
                out[k] = bd[k]
            else:
                out[k] = _mat(nk1, nk)
        return out

    return ext(cx.L_bd, cx.L_cells), ext(cx.Lt_bd, cx.Lt_cells)


def circle_double_cover(n=3):
    """Unbranched connected 2:1 cover of an n-gon circle."""
    L0 = [(i,) for i in range(n)]
    L1 = [(i, (i + 1) % n) for i in range(n)]
    bdL = _mat(n, n)
    for e, (i, j) in enumerate(L1):
        bdL[i, e] ^= 1
        bdL[j, e] ^= 1
    Lt0 = [(i, a) for a in range(2) for i in range(n)]
    vid = {v: k for k, v in enumerate(Lt0)}
    Lt1 = [(e, a) for a in range(2) for e in range(n)]
    bdT = _mat(2 * n, 2 * n)
    for k, (e, a) in enumerate(Lt1):
        i, j = L1[e]
        jump = 1 if e == n - 1 else 0     # the sheet swap closing the loop
        bdT[vid[(i, a)], k] ^= 1
        bdT[vid[(j, (a + jump) % 2)], k] ^= 1
    lifts0 = [[vid[(i, 0)], vid[(i, 1)]] for i in range(n)]
    lifts1 = [[e, e + n] for e in range(n)]
    cx = CoverComplex("circle-2:1", 1, [L0, L1], [None, bdL], [Lt0, Lt1], [None, bdT],
                      [lifts0, lifts1], [[False] * n, [False] * n])
    validate_cover(cx)
    return cx


def tetrahedron_torus_cover(swap_edges=((0, 1), (2, 3))):
    """Torus over the tetrahedral sphere, branched at its four vertices.

    Each face lifts to two sheets; crossing an edge in ``swap_edges`` exchanges
    them.  The monodromy around a vertex is the parity of swap edges at it and
    must be odd for every branch vertex.
    """
    V = [(i,) for i in range(4)]
    E = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    F = [(i, j, k) for i in range(4) for j in range(i + 1, 4) for k in range(j + 1, 4)]
    swap = {tuple(sorted(e)) for e in swap_edges}
    for v in range(4):
        if sum(1 for e in swap if v in e) % 2 != 1:
            raise DataError(f"monodromy around branch vertex {v} is trivial")
    eid = {e: k for k, e in enumerate(E)}
    bd1 = _mat(4, 6)
    for k, (i, j) in enumerate(E):
        bd1[i, k] = bd1[j, k] = 1
    bd2 = _mat(6, 4)
    for k, f in enumerate(F):
        for e in ((f[0], f[1]), (f[0], f[2]), (f[1], f[2])):
            bd2[eid[e], k] = 1
    # reference face of an edge: the first face containing it
    ref = {e: min(k for k, f in enumerate(F) if set(e) <= set(f)) for e in E}
    Lt0 = list(V)
    Lt1 = [(e, a) for e in E for a in range(2)]
    Lt2 = [(f, a) for f in F for a in range(2)]
    t1 = {c: k for k, c in enumerate(Lt1)}
    tb1 = _mat(4, 12)
    for k, (e, a) in enumerate(Lt1):
        tb1[e[0], k] = tb1[e[1], k] = 1
    tb2 = _mat(12, 8)
    for k, (f, a) in enumerate(Lt2):
        fk = F.index(f)
        for e in ((f[0], f[1]), (f[0], f[2]), (f[1], f[2])):
            sheet = a if ref[e] == fk else (a + (e in swap)) % 2
            tb2[t1[(e, sheet)], k] ^= 1
    lifts = [[[i] for i in range(4)],
             [[2 * k, 2 * k + 1] for k in range(6)],
             [[2 * k, 2 * k + 1] for k in range(4)]]
    branch = [[True] * 4, [False] * 6, [False] * 4]
    cx = CoverComplex("tetrahedron-torus", 2, [V, E, F], [None, bd1, bd2],
                      [Lt0, Lt1, Lt2], [None, tb1, tb2], lifts, branch)
    validate_cover(cx)
    return cx


# ------------------------------------------------------------ LES check

@dataclass
class LESReport:
    name: str
    chain_exact: bool
    pT_zero: bool
    dims: List[Tuple[str, int]]
    map_ranks: List[Tuple[str, int]]
    slot_exact: List[bool]

    @property
    def exact(self):
        return self.chain_exact and self.pT_zero and all(self.slot_exact)


def _homology_data(bd, k):
    """(cycle basis as columns, boundary space as columns, dim H_k)."""
    Z = gf2_nullspace(bd[k], bd[k].shape[1])
    B = bd[k + 1]
    dim = Z.shape[1] - gf2_rank(B)
    return Z, B, dim


def _induced_rank(images, B):
    if images.shape[1] == 0:
        return 0
    if B.shape[1] == 0:
        return gf2_rank(images)
    return gf2_rank(np.concatenate([images, B], 1)) - gf2_rank(B)


def transfer_les_check(cx):
    validate_cover(cx)
    bdL, bdT = _prep(cx)
    top = cx.dim
    bdR = {}
    for k in range(top + 2):
        rk = cx.rel_index(k) if k <= top else []
        rk1 = cx.rel_index(k - 1) if 1 <= k <= top + 1 else []
        bdR[k] = cx.rel_bd(k) if 1 <= k <= top else _mat(len(rk1), len(rk))

    chain_exact = True
    pT_zero = True
    for k in range(top + 1):
        T = cx.transfer(k)
        P = cx.projection(k)
        Tf = cx.transfer_full(k)
        if np.any((P.astype(int) @ Tf.astype(int)) % 2):
            pT_zero = False
        nker = P.shape[1] - gf2_rank(P)
        if gf2_rank(T) != T.shape[1] or gf2_rank(P) != P.shape[0] or gf2_rank(T) != nker:
            chain_exact = False
        if np.any((P.astype(int) @ T.astype(int)) % 2):
            chain_exact = False
        if k >= 1:
            lhs = (bdT[k].astype(int) @ T.astype(int)) % 2
            rhs = (cx.transfer(k - 1).astype(int) @ bdR[k].astype(int)) % 2
            if np.any(lhs != rhs):
                raise DataError("transfer is not a chain map")

    dims, ranks, seq = [], [], []
    for k in range(top, -1, -1):
        ZR, BR, hR = _homology_data(bdR, k)
        ZT, BT, hT = _homology_data(bdT, k)
        ZL, BL, hL = _homology_data(bdL, k)
        T = cx.transfer(k)
        P = cx.projection(k)
        rT = _induced_rank((T.astype(int) @ ZR.astype(int)) % 2, BT)
        rP = _induced_rank((P.astype(int) @ ZT.astype(int)) % 2, BL)
        if k >= 1:
            lift = cx.transfer_full(k) * 0
            for x, ls in enumerate(cx.lifts[k]):
                lift[ls[0], x] = 1
            db = (bdT[k].astype(int) @ lift.astype(int) @ ZL.astype(int)) % 2
            Tk1 = cx.transfer(k - 1)
            cols = [gf2_solve(Tk1, db[:, j]) for j in range(db.shape[1])]
            imgs = np.array(cols, dtype=np.uint8).T.reshape(Tk1.shape[1], len(cols))
            _, BR1, _ = _homology_data(bdR, k - 1)
            rD = _induced_rank(imgs, BR1)
        else:
            rD = 0
        dims += [(f"H{k}(L,S)", hR), (f"H{k}(Lt)", hT), (f"H{k}(L)", hL)]
        ranks += [(f"T{k}", rT), (f"p{k}", rP), (f"d{k}", rD)]
        seq += [(hR, rT), (hT, rP), (hL, rD)]
    # slot j: incoming map rank is the previous entry's outgoing rank
    slot_exact = []
    prev = 0
    for h, out in seq:
        slot_exact.append(prev + out == h)
        prev = out
    return LESReport(cx.name, chain_exact, pT_zero, dims, ranks, slot_exact)


# ----------------------------------------------------------- obstructions

PI1_GOOD = ("finite", "no-nonabelian-free-subgroup")


@dataclass
class CoveringData:
    b1_L: int
    b2_L: int
    b1_cover: int
    b2_cover: int
    chi_L: int = 0
    pi1_class: str = "other"
    cy_neighborhood: Optional[bool] = None
    unobstructed: bool = True

    def __post_init__(self):
        for k in ("b1_L", "b2_L", "b1_cover", "b2_cover"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be nonnegative")
        if self.pi1_class not in PI1_GOOD + ("other",):
            raise ValueError(f"unknown pi1 class {self.pi1_class!r}")

    @property
    def has_cy(self):
        return self.chi_L == 0 if self.cy_neighborhood is None else bool(self.cy_neighborhood)


def betti_obstruction(cd):
    if cd.b1_cover <= cd.b1_L:
        return "b1-violation"
    if cd.pi1_class in PI1_GOOD and cd.has_cy and cd.unobstructed and cd.b2_cover <= cd.b2_L:
        return "obstructed-nondegenerate"
    return "passes"


def sphere_involution_example(n):
    """S^1 x S^(n-1) over S^n, branched along two copies of S^(n-2); n >= 3."""
    if n < 3:
        raise ValueError("n must be at least 3")
    b2_cover = 1 if n - 1 == 2 else 0
    chi = 1 + (-1) ** n
    return CoveringData(0, 0, 1, b2_cover, chi, "finite",
                        cy_neighborhood=True if n % 2 == 0 else None)


def disconnected_sigma_check(H1L_trivial, sigma_components, b1_cover):
    if H1L_trivial and b1_cover > 0 and sigma_components < 2:
        return "violation"
    return "consistent"


# ----------------------------------------------------------- bundled data

PD_CODES = {
    "hopf": "X[4,1,3,2] X[2,3,1,4]",
    "unlink2": "X[4,1,3,2] X[3,1,4,2]",
    "trefoil": "X[1,5,2,4] X[3,1,4,6] X[5,3,6,2]",
    "figure8": "X[4,2,5,1] X[8,6,1,5] X[6,3,7,4] X[2,7,3,8]",
}


def bundled_diagram(name):
    if name == "unknot":
        return unknot()
    if name not in PD_CODES:
        raise ParseError(f"unknown diagram {name!r}")
    return make_diagram(PD_CODES[name], name)


def reidemeister_pairs():
    """Three diagram pairs for each move type, as (move, before, after)."""
    base = {k: parse_pd(v) for k, v in PD_CODES.items()}
    out = []
    for k, name in enumerate(("trefoil", "figure8", "hopf")):
        out.append(("R1", base[name], r1_move(base[name], 3 * k + 1, k)))
    for k, name in enumerate(("trefoil", "figure8", "unlink2")):
        out.append(("R2", base[name], r2_move(base[name], k, a_over=bool(k % 2))))
    words = (([1, 2, 1], [2, 1, 2]),
             ([-1, -2, -1, 2], [-2, -1, -2, 2]),
             ([1, 2, 1, 1, -2], [2, 1, 2, 1, -2]))
    for w1, w2 in words:
        out.append(("R3", braid_closure_pd(w1, 3), braid_closure_pd(w2, 3)))
    return out
