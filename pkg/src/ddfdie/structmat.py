"""Stacked signals, block Hankel/Toeplitz matrices, channel selections and pinv.

Conventions
-----------
Signals are channel-major arrays of shape ``(d, T)``. Channel sets ``p`` (outputs)
and ``q`` (inputs) are 1-based, as is customary when naming sensors/actuators;
they are converted to 0-based row indices exactly once, in :class:`IndexSelection`.

``stack_signal`` and ``build_block_matrices`` take a *depth* ``i`` and produce
``i + 1`` blocks (``g(k-i), ..., g(k)``). A filter of order ``i`` works with
windows of ``i`` samples and therefore calls these with depth ``i - 1``; see
:func:`filter_blocks`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-10


class DimensionError(ValueError):
    """Array shapes are inconsistent with the requested block structure."""


class OutOfRangeError(IndexError):
    """A window or channel index falls outside the available data."""


def _as_channels(series) -> np.ndarray:
    g = np.asarray(series, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2:
        raise DimensionError(f"series must be 1-D or (d, T), got shape {g.shape}")
    return g


@dataclass(frozen=True)
class IndexSelection:
    """Output set ``p`` and input set ``q`` (1-based) for ``l`` outputs, ``m`` inputs."""

    p: tuple[int, ...]
    q: tuple[int, ...]
    l: int
    m: int

    def __init__(self, p: Sequence[int] = (), q: Sequence[int] = (), *, l: int, m: int):
        p = tuple(int(v) for v in p)
        q = tuple(int(v) for v in q)
        for name, s, hi in (("p", p, l), ("q", q, m)):
            if any(b <= a for a, b in zip(s, s[1:])):
                raise ValueError(f"{name}={s} must be strictly increasing without duplicates")
            if s and (s[0] < 1 or s[-1] > hi):
                raise OutOfRangeError(f"{name}={s} outside channel range 1..{hi}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "l", int(l))
        object.__setattr__(self, "m", int(m))

    @property
    def n_p(self) -> int:
        return len(self.p)

    @property
    def n_q(self) -> int:
        return len(self.q)

    @property
    def not_p(self) -> tuple[int, ...]:
        return tuple(c for c in range(1, self.l + 1) if c not in self.p)

    @property
    def not_q(self) -> tuple[int, ...]:
        return tuple(c for c in range(1, self.m + 1) if c not in self.q)

    @property
    def l_prime(self) -> int:
        return self.l - self.n_p

    @property
    def m_prime(self) -> int:
        return self.m - self.n_q

    def scaled_p(self, k: int) -> tuple[int, ...]:
        """The set ``kp`` (every element of ``p`` times ``k``)."""
        return tuple(k * c for c in self.p)

    def without_p(self) -> "IndexSelection":
        return IndexSelection((), self.q, l=self.l, m=self.m)

    def block_rows(self, which: Literal["p", "q"], i: int, keep: bool) -> np.ndarray:
        """0-based indices into an ``i``-block stacked vector.

        ``keep=False`` returns the complement rows (``p-``/``q-``), ``keep=True``
        the rows ``p, 2p, ..., ip`` themselves (read block-wise).
        """
        chans, size = (self.p, self.l) if which == "p" else (self.q, self.m)
        inside = np.zeros(size, dtype=bool)
        inside[[c - 1 for c in chans]] = True
        mask = np.tile(inside if keep else ~inside, i)
        return np.flatnonzero(mask)

    def to_dict(self) -> dict:
        return {"p": list(self.p), "q": list(self.q), "l": self.l, "m": self.m}


@dataclass(frozen=True)
class StackWindow:
    """Depth ``i``, Hankel width ``j`` (columns ``j + 1``) and start index ``k0``."""

    i: int
    j: int = 0
    k0: int = 0

    def __post_init__(self):
        if self.i < 0 or self.j < 0 or self.k0 < 0:
            raise ValueError(f"window fields must be non-negative: {self}")


def stack_signal(series, i: int, k0: int = 0, plus: bool = False) -> np.ndarray:
    """Stack ``g(k0), g(k0+1), ..., g(k0+i)`` (one more sample with ``plus``).

    Returns a 1-D vector of length ``(i + 1) * d`` (``(i + 2) * d`` with ``plus``).
    """
    g = _as_channels(series)
    depth = i + (2 if plus else 1)
    if k0 < 0 or k0 + depth > g.shape[1]:
        raise OutOfRangeError(
            f"window [{k0}, {k0 + depth - 1}] exceeds series of length {g.shape[1]}"
        )
    return g[:, k0:k0 + depth].T.reshape(-1)


def build_hankel(series, i: int, j: int, k0: int = 0) -> np.ndarray:
    """Block Hankel matrix with ``i + 1`` block rows and ``j + 1`` columns.

    Column ``c`` is ``stack_signal(series, i, k0 + c)``.
    """
    g = _as_channels(series)
    d, T = g.shape
    rows, cols = i + 1, j + 1
    if k0 < 0 or k0 + rows + cols - 1 > T:
        raise OutOfRangeError(
            f"Hankel of {rows}x{cols} blocks from k0={k0} needs {k0 + rows + cols - 1} "
            f"samples, series has {T}"
        )
    H = np.empty((rows * d, cols))
    for r in range(rows):
        H[r * d:(r + 1) * d, :] = g[:, k0 + r:k0 + r + cols]
    return H


def window_matrix(series, n_blocks: int, k0: int = 0, cols: int | None = None) -> np.ndarray:
    """Columns of ``n_blocks``-sample windows starting at ``k0, k0+1, ...``.

    Thin wrapper over :func:`build_hankel` using a block count instead of a depth.
    ``cols`` defaults to every complete window.
    """
    g = _as_channels(series)
    if cols is None:
        cols = g.shape[1] - k0 - n_blocks + 1
    if n_blocks < 1 or cols < 1:
        raise OutOfRangeError(f"no complete {n_blocks}-sample window in the series")
    return build_hankel(g, n_blocks - 1, cols - 1, k0)


@dataclass(frozen=True)
class BlockMatrixSet:
    """Toeplitz blocks built from Markov parameters at a given depth.

    Attributes
    ----------
    D : ((i+1) l, (i+1) m)
        Strictly lower block triangular, ``D[r, c] = H_{r-c-1}``.
    D_plus : ((i+1) l, (i+1) m)
        Lower block triangular, ``D_plus[r, c] = H_{r-c}``.
    curlyD : ((i+1) l, m)
        First block column of ``D``: ``[0; H_0; ...; H_{i-1}]``.
    curlyD_plus : ((i+1) l, m)
        ``[H_0; ...; H_i]``.
    """

    D: np.ndarray
    D_plus: np.ndarray
    curlyD: np.ndarray
    curlyD_plus: np.ndarray
    depth: int
    l: int
    m: int


def _markov_array(markov) -> np.ndarray:
    H = getattr(markov, "H", markov)
    H = np.asarray(H, dtype=float)
    if H.ndim != 3:
        raise DimensionError(f"Markov parameters must have shape (L+1, l, m), got {H.shape}")
    return H


def build_block_matrices(markov, i: int) -> BlockMatrixSet:
    """Build ``D``, ``D_plus``, ``curlyD``, ``curlyD_plus`` at depth ``i``."""
    H = _markov_array(markov)
    if H.shape[0] < i + 1:
        raise ValueError(f"depth {i} needs H_0..H_{i}, only {H.shape[0]} Markov parameters given")
    _, l, m = H.shape
    nb = i + 1
    D = np.zeros((nb * l, nb * m))
    Dp = np.zeros((nb * l, nb * m))
    for r in range(nb):
        for c in range(r + 1):
            Dp[r * l:(r + 1) * l, c * m:(c + 1) * m] = H[r - c]
            if c < r:
                D[r * l:(r + 1) * l, c * m:(c + 1) * m] = H[r - c - 1]
    curly = D[:, :m].copy()
    curly_plus = H[:nb].reshape(nb * l, m)
    return BlockMatrixSet(D, Dp, curly, curly_plus, i, l, m)


def filter_blocks(markov, order: int) -> BlockMatrixSet:
    """Block matrices for an order-``order`` filter (windows of ``order`` samples)."""
    if order < 1:
        raise ValueError("filter order must be >= 1")
    return build_block_matrices(markov, order - 1)


SelectMode = Literal[
    "rows_drop_p", "rows_keep_p", "cols_drop_q", "cols_keep_q", "rows_drop_q", "rows_keep_q"
]


def select(obj, sel: IndexSelection, mode: SelectMode, i: int) -> np.ndarray:
    """Restrict rows/columns of a block-structured matrix or stacked vector.

    ``rows_drop_p`` deletes rows ``p, 2p, ..., ip``; ``rows_keep_p`` keeps only
    those; the ``q`` variants act on columns (matrices) or rows (stacked input
    vectors) in blocks of ``m``.
    """
    a = np.asarray(obj, dtype=float)
    axis_kind, action, which = mode.split("_")
    block = sel.l if which == "p" else sel.m
    axis = 0 if axis_kind == "rows" else 1
    if axis == 1 and a.ndim != 2:
        raise DimensionError("column selection needs a matrix")
    size = a.shape[axis]
    if size != i * block:
        raise DimensionError(
            f"{mode}: dimension {size} is not {i} blocks of {block}"
        )
    idx = sel.block_rows(which, i, action == "keep")
    return np.take(a, idx, axis=axis)


def pinv_tol(A, rank_tolerance: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse dropping singular values below ``tol * s_max``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return np.zeros(A.shape[::-1])
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        P = np.linalg.pinv(A, rcond=rank_tolerance)
    if not np.all(np.isfinite(P)):
        raise ValueError("pseudo-inverse overflows: kept singular values are below the float64 range")
    return P


def numerical_rank(A, rank_tolerance: float = DEFAULT_RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tolerance * s[0]))


def selector(alpha: int, total: int) -> np.ndarray:
    """``[I_alpha  0]`` with ``total`` columns (leading-entry selector)."""
    out = np.zeros((alpha, total))
    out[:, :alpha] = np.eye(alpha)
    return out


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))
