"""Lattice construction, exact nearest-point search, and ball enumeration.

A lattice is represented by a square basis matrix whose COLUMNS are the
generator vectors.  All search routines are exact: the nearest-point solver
is a depth-first sphere search with a node budget, and the batch decoder
falls back to it whenever the cheap rounding certificate does not apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExceeded,
    ConfigError,
    DimensionMismatch,
    NotSquare,
    SingularBasis,
    UnknownName,
)

DEFAULT_NODE_CAP = 10**8
DEFAULT_POINT_CAP = 20_000_000

# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LatticePoint:
    """Integer coefficients plus the embedded vector they map to.

    For coset outputs the embedding carries the shift (lambda - c), while
    coeffs always index the underlying lattice point lambda.
    """

    coeffs: np.ndarray
    embedding: np.ndarray


@dataclass(eq=False)
class Lattice:
    basis: np.ndarray
    label: str = ""
    structure: tuple | None = None
    lambda1: float | None = None
    _qr: tuple | None = field(default=None, repr=False)
    _inv: np.ndarray | None = field(default=None, repr=False)
    _cols: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    @property
    def gram(self) -> np.ndarray:
        return self.basis.T @ self.basis

    def qr(self) -> tuple:
        """Cached (Q, R) with R upper triangular and positive diagonal."""
        if self._qr is None:
            q, r = np.linalg.qr(self.basis)
            sgn = np.sign(np.diag(r))
            sgn[sgn == 0] = 1.0
            q = q * sgn
            r = sgn[:, None] * r
            self._qr = (np.ascontiguousarray(q), np.ascontiguousarray(r))
        return self._qr

    def inv(self) -> np.ndarray:
        if self._inv is None:
            self._inv = np.linalg.inv(self.basis)
        return self._inv

    def dual(self) -> "Lattice":
        """Dual lattice, basis inv(B).T; volume is 1/volume."""
        return make_lattice(self.inv().T, label=self.label + "*")

    def scale(self, a: float) -> "Lattice":
        if a <= 0:
            raise SingularBasis("scale factor must be positive")
        structure = None
        if self.structure is not None:
            kind = self.structure[0]
            if kind == "diag":
                structure = ("diag", self.structure[1] * a)
            elif kind == "parity":
                structure = ("parity", self.structure[1] * a, self.structure[2])
        lam = None if self.lambda1 is None else self.lambda1 * a
        return Lattice(self.basis * a, label=f"{self.label}*{a:g}",
                       structure=structure, lambda1=lam)

    def lambda1_lb(self) -> float:
        """Certified lower bound on the shortest nonzero vector norm."""
        if self.lambda1 is not None:
            return self.lambda1
        s = float(np.linalg.svd(self.basis, compute_uv=False)[-1])
        self.lambda1 = s  # sigma_min(B) <= ||B u|| for any unit u
        return s

    def _dfs_tabs(self) -> tuple:
        # cached plain-python views of R for the depth-first search
        if self._cols is None:
            _, r = self.qr()
            n = self.n
            diag = tuple(float(r[k, k]) for k in range(n))
            cols = tuple(tuple(float(r[i, k]) for i in range(k)) for k in range(n))
            self._cols = (diag, cols)
        return self._cols


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def make_lattice(basis, label: str = "") -> Lattice:
    """Build a lattice from a square, nonsingular generator matrix (columns)."""
    b = np.array(basis, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise NotSquare(f"basis must be square, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise SingularBasis("basis entries must be finite")
    scale = float(np.prod(np.linalg.norm(b, axis=0)))
    det = abs(float(np.linalg.det(b)))
    if det <= 1e-12 * max(scale, 1e-300):
        raise SingularBasis(f"basis is singular (|det| = {det:g})")
    structure = None
    offdiag = b - np.diag(np.diag(b))
    if np.all(offdiag == 0.0) and np.all(np.diag(b) > 0):
        structure = ("diag", np.diag(b).copy())
    return Lattice(b, label=label or "custom", structure=structure)


def standard_lattice(name: str, n: int | None = None) -> Lattice:
    """Named constructions: Zn, Dn, E8, A2."""
    if name == "Zn":
        if n is None or n < 1:
            raise ConfigError("Zn needs a dimension n >= 1")
        lat = Lattice(np.eye(n), label=f"Z{n}",
                      structure=("diag", np.ones(n)), lambda1=1.0)
        return lat
    if name == "Dn":
        if n is None or n < 2:
            raise ConfigError("Dn needs a dimension n >= 2")
        rows = np.zeros((n, n))
        rows[0, 0] = -1.0
        rows[0, 1] = -1.0
        for i in range(1, n):
            rows[i, i - 1] = 1.0
            rows[i, i] = -1.0
        return Lattice(rows.T.copy(), label=f"D{n}",
                       structure=("parity", 1.0, False), lambda1=math.sqrt(2.0))
    if name == "E8":
        rows = np.zeros((8, 8))
        rows[0, 0] = 2.0
        for i in range(1, 7):
            rows[i, i - 1] = -1.0
            rows[i, i] = 1.0
        rows[7, :] = 0.5
        return Lattice(rows.T.copy(), label="E8",
                       structure=("parity", 1.0, True), lambda1=math.sqrt(2.0))
    if name == "A2":
        b = np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]])
        return Lattice(b, label="A2", lambda1=1.0)
    raise UnknownName(f"no lattice named {name!r}")


# ---------------------------------------------------------------------------
# exact nearest-point search
# ---------------------------------------------------------------------------


def _enum_nearest(diag, cols, t, node_cap, tie_rel=1e-12, init=None, feasible=None):
    """Depth-first sphere search minimizing ||R u - t||^2.

    Candidates at each level are visited in zig-zag order around the real
    center, so a level can be abandoned as soon as its contribution exceeds
    the current limit.  Returns (ties, best, nodes) where ties is a list of
    (coeff tuple, dist2) within the tie band of the best feasible leaf.
    """
    n = len(t)
    best = math.inf
    ties: list = []
    if init is not None:
        u_init, d_init = init
        best = d_init
        ties = [(tuple(int(v) for v in u_init), d_init)]
    band = tie_rel * (1.0 + best) if math.isfinite(best) else 0.0
    lim = best + band

    u = [0] * n
    u0 = [0] * n
    d0 = [1] * n
    idx = [0] * n
    slev: list = [None] * n
    dlev = [0.0] * n
    slev[n - 1] = list(t)
    dlev[n - 1] = 0.0
    k = n - 1
    fresh = True
    nodes = 0

    while True:
        if fresh:
            sk = slev[k]
            c = sk[k] / diag[k]
            uk = math.floor(c + 0.5)
            u0[k] = uk
            d0[k] = 1 if c >= uk else -1
            idx[k] = 0
            u[k] = uk
            fresh = False
        else:
            idx[k] += 1
            j = idx[k]
            m = (j + 1) >> 1
            off = m * d0[k] if (j & 1) else -m * d0[k]
            u[k] = u0[k] + off
        nodes += 1
        if nodes > node_cap:
            raise BudgetExceeded(f"nearest-point search passed {node_cap} nodes")
        e = slev[k][k] - diag[k] * u[k]
        nd = dlev[k] + e * e
        if nd <= lim:
            if k == 0:
                uu = tuple(u)
                if feasible is None or feasible(uu):
                    if nd < best:
                        best = nd
                        band = tie_rel * (1.0 + best)
                        lim = best + band
                        ties = [tv for tv in ties if tv[1] <= lim]
                        ties.append((uu, nd))
                    elif nd <= lim:
                        ties.append((uu, nd))
                # keep walking level 0 outward
            else:
                sk = slev[k]
                col = cols[k]
                uk = u[k]
                nxt = [sk[i] - col[i] * uk for i in range(k)]
                slev[k - 1] = nxt
                dlev[k - 1] = nd
                k -= 1
                fresh = True
        else:
            k += 1
            if k == n:
                break
    # dedupe (the seeded incumbent may coincide with an enumerated leaf)
    seen = {}
    for uu, nd in ties:
        if uu not in seen or nd < seen[uu]:
            seen[uu] = nd
    final = [(uu, nd) for uu, nd in seen.items() if nd <= best + band]
    final.sort(key=lambda item: item[0])
    return final, best, nodes


def closest_point(lat: Lattice, y, node_cap: int = DEFAULT_NODE_CAP) -> LatticePoint:
    """Exact nearest lattice point to y.

    Ties (squared-distance difference inside a relative 1e-12 band) are
    broken toward the lexicographically smallest coefficient vector.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (lat.n,):
        raise DimensionMismatch(f"point has shape {y.shape}, lattice dim {lat.n}")
    if not np.all(np.isfinite(y)):
        raise DimensionMismatch("point must be finite")
    q, _ = lat.qr()
    t = (y @ q).tolist()
    diag, cols = lat._dfs_tabs()
    ties, _, _ = _enum_nearest(diag, cols, t, node_cap)
    u = np.array(ties[0][0], dtype=np.int64)
    return LatticePoint(u, lat.basis @ u)


def closest_points_batch(lat: Lattice, ys: np.ndarray,
                         node_cap: int = DEFAULT_NODE_CAP) -> np.ndarray:
    """Coefficient matrix of the nearest lattice points for each row of ys.

    Rounds with Babai's nearest-plane first; rows whose residual is inside
    half the minimum distance are provably optimal, the rest rerun through
    the exact search.  Output matches closest_point row by row (up to ties,
    which the exact path resolves and the certified path cannot hit).
    """
    ys = np.asarray(ys, dtype=float)
    m, n = ys.shape
    if n != lat.n:
        raise DimensionMismatch(f"batch has width {n}, lattice dim {lat.n}")
    q, r = lat.qr()
    tmat = ys @ q
    s = tmat.copy()
    u = np.empty((m, n), dtype=np.int64)
    for k in range(n - 1, -1, -1):
        uk = np.floor(s[:, k] / r[k, k] + 0.5).astype(np.int64)
        u[:, k] = uk
        if k:
            s[:, :k] -= uk[:, None] * r[:k, k]
    resid = tmat - u @ r.T
    d2 = np.einsum("ij,ij->i", resid, resid)
    half = 0.5 * lat.lambda1_lb()
    hard = np.nonzero(d2 >= (half * half) * (1.0 - 1e-9))[0]
    if hard.size:
        diag, cols = lat._dfs_tabs()
        for i in hard:
            ties, _, _ = _enum_nearest(diag, cols, tmat[i].tolist(), node_cap)
            u[i] = ties[0][0]
    return u


def mod_lattice(lat: Lattice, x, node_cap: int = DEFAULT_NODE_CAP) -> np.ndarray:
    """x reduced modulo the lattice: x - closest_point(x)."""
    x = np.asarray(x, dtype=float)
    return x - closest_point(lat, x, node_cap).embedding


def coset_decode(lat: Lattice, c, y, node_cap: int = DEFAULT_NODE_CAP) -> LatticePoint:
    """Nearest point of the shifted set L - c to y.

    Equals closest_point(L, y + c) shifted back; the embedding field holds
    lambda - c while coeffs index lambda.
    """
    c = np.asarray(c, dtype=float)
    y = np.asarray(y, dtype=float)
    if c.shape != (lat.n,):
        raise DimensionMismatch(f"shift has shape {c.shape}, lattice dim {lat.n}")
    p = closest_point(lat, y + c, node_cap)
    return LatticePoint(p.coeffs, p.embedding - c)


def contains(lat: Lattice, x, tol: float = 1e-6) -> bool:
    """Membership test: x is a lattice vector up to the given residual."""
    x = np.asarray(x, dtype=float)
    u = np.round(lat.inv() @ x)
    return bool(np.linalg.norm(lat.basis @ u - x) < tol)


# ---------------------------------------------------------------------------
# batched ball enumeration
# ---------------------------------------------------------------------------


def enumerate_ball(lat: Lattice, center, radius: float,
                   point_cap: int = DEFAULT_POINT_CAP) -> tuple:
    """All lattice points with ||B u - center|| <= radius.

    Returns (U, d2): integer coefficients, one point per row, plus squared
    distances to the center.  Level-by-level expansion over the triangular
    factor, vectorized over the surviving prefixes.
    """
    center = np.asarray(center, dtype=float)
    n = lat.n
    if center.shape != (n,):
        raise DimensionMismatch(f"center has shape {center.shape}, lattice dim {n}")
    if radius < 0:
        return np.empty((0, n), dtype=np.int64), np.empty(0)
    q, r = lat.qr()
    t = center @ q
    rad2 = radius * radius
    slack = rad2 * (1.0 + 1e-12) + 1e-12

    tau = t[None, :].copy()
    d2 = np.zeros(1)
    ucols: list = []
    for k in range(n - 1, -1, -1):
        rkk = r[k, k]
        c = tau[:, k] / rkk
        w = np.sqrt(np.maximum(slack - d2, 0.0)) / rkk
        lo = np.ceil(c - w - 1e-12).astype(np.int64)
        hi = np.floor(c + w + 1e-12).astype(np.int64)
        cnt = np.maximum(hi - lo + 1, 0)
        total = int(cnt.sum())
        if total == 0:
            return np.empty((0, n), dtype=np.int64), np.empty(0)
        if total > point_cap:
            raise BudgetExceeded(f"ball enumeration passed {point_cap} points")
        rows = np.repeat(np.arange(cnt.size), cnt)
        starts = np.cumsum(cnt) - cnt
        uk = lo[rows] + (np.arange(total) - starts[rows])
        e = rkk * uk - tau[rows, k]
        nd = d2[rows] + e * e
        keep = nd <= slack
        rows = rows[keep]
        uk = uk[keep]
        d2 = nd[keep]
        ucols = [col[rows] for col in ucols]
        ucols.append(uk)
        if k:
            tau = tau[rows][:, :k] - uk[:, None] * r[:k, k][None, :]
    u = np.stack(ucols[::-1], axis=1).astype(np.int64)
    return u, d2


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------


def save_basis(lat: Lattice, path: str) -> None:
    """Write the basis: dimension line, then one row of coordinates per line."""
    with open(path, "w") as fh:
        fh.write(f"{lat.n}\n")
        for row in lat.basis:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_basis(path: str, label: str = "") -> Lattice:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"empty basis file: {path}")
    try:
        n = int(lines[0])
        rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise ConfigError(f"malformed basis file {path}: {exc}") from None
    if len(rows) != n or any(len(row) != n for row in rows):
        raise ConfigError(f"basis file {path} does not hold {n} rows of {n} entries")
    return make_lattice(np.array(rows), label=label or path)
