"""Markov parameter estimation and the data-driven estimate of ``M``.

The Markov parameters ``H_b = C A^b B`` come from a least-squares FIR fit.
``M`` is then estimated from the two data matrices

    G0 = Y_i(k-i)   - D   U_i(k-i)
    G1 = Y_i(k-i+1) - D_+ U_i(k-i)

as ``M = G1 pinv(G0)``. Both ``G0`` and ``G1`` are built from windows of ``i``
samples, so ``M`` is ``i l' x i l'``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sim import IoDataset
from .structmat import (
    DEFAULT_RANK_TOL,
    IndexSelection,
    filter_blocks,
    numerical_rank,
    pinv_tol,
    select,
    spectral_radius,
    window_matrix,
)


class PersistentExcitationError(ValueError):
    """The FIR regressor is rank deficient."""


class RankDeficiencyError(ValueError):
    """``G0`` does not have full row rank."""


@dataclass(frozen=True)
class MarkovSequence:
    """Impulse-response blocks ``H[0..L]`` of shape ``(L + 1, l, m)``."""

    H: np.ndarray
    source: str = "estimated"

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 3:
            raise ValueError(f"H must be (L+1, l, m), got shape {H.shape}")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def L(self) -> int:
        return self.H.shape[0] - 1

    @property
    def l(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[2]

    def __getitem__(self, b):
        return self.H[b]

    @classmethod
    def from_model(cls, model, L: int) -> "MarkovSequence":
        return cls(model.markov(L), source="exact")

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(f"# markov l={self.l} m={self.m} L={self.L} source={self.source}\n")
            w = csv.writer(fh)
            w.writerow(["lag", "row"] + [f"col{c + 1}" for c in range(self.m)])
            for b in range(self.L + 1):
                for r in range(self.l):
                    w.writerow([b, r + 1] + [repr(float(v)) for v in self.H[b, r]])

    @classmethod
    def from_csv(cls, path) -> "MarkovSequence":
        with Path(path).open() as fh:
            meta = fh.readline().lstrip("#").split()
            kv = dict(tok.split("=") for tok in meta[1:])
            rows = list(csv.reader(fh))[1:]
        l, m, L = int(kv["l"]), int(kv["m"]), int(kv["L"])
        H = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(L + 1, l, m)
        return cls(H, kv.get("source", "estimated"))


def fir_regressor(U: np.ndarray, L: int) -> np.ndarray:
    """Rows ``[u(k-1); ...; u(k-1-L)]`` for ``k = L+1 .. T-1`` (as columns)."""
    m, T = U.shape
    cols = T - L - 1
    Phi = np.empty(((L + 1) * m, cols))
    for b in range(L + 1):
        # u(k-1-b) for k = L+1..T-1
        Phi[b * m:(b + 1) * m] = U[:, L - b:L - b + cols]
    return Phi


def _deficient_lag(Phi: np.ndarray, m: int, tol: float) -> int:
    for b in range(Phi.shape[0] // m):
        sub = Phi[:(b + 1) * m]
        if numerical_rank(sub, tol) < sub.shape[0]:
            return b
    return Phi.shape[0] // m - 1


def _fit_fir(data: IoDataset, L: int, tol: float) -> np.ndarray:
    U, Y = data.U, data.Y
    m = U.shape[0]
    if data.T - L - 1 < (L + 1) * m:
        raise PersistentExcitationError(
            f"{data.T} samples cannot determine {(L + 1) * m} FIR coefficients (L={L})"
        )
    Phi = fir_regressor(U, L)
    if numerical_rank(Phi, tol) < Phi.shape[0]:
        lag = _deficient_lag(Phi, m, tol)
        raise PersistentExcitationError(
            f"input is not persistently exciting: regressor loses rank at lag {lag}"
        )
    target = Y[:, L + 1:]
    theta, *_ = np.linalg.lstsq(Phi.T, target.T, rcond=None)
    # theta is ((L+1) m, l); block b holds H_b^T
    return theta.T.reshape(Y.shape[0], L + 1, m).transpose(1, 0, 2)


def default_fir_order(i: int) -> int:
    return 4 * i + 4


def estimate_markov(
    data: IoDataset,
    L: int | None = None,
    i: int = 2,
    tail_ratio: float = 0.01,
    max_L: int = 48,
    rank_tolerance: float = 1e-8,
) -> MarkovSequence:
    """Least-squares FIR estimate of ``H_0 .. H_L``.

    The regression is ``y(k) = sum_b H_b u(k-1-b)`` (no direct feedthrough).
    With ``L=None`` the order starts at ``4 i + 4`` and is doubled until the
    last block is below ``tail_ratio`` of the largest one, up to ``max_L``.
    """
    if L is not None:
        return MarkovSequence(_fit_fir(data, int(L), rank_tolerance))
    L = default_fir_order(i)
    while True:
        H = _fit_fir(data, L, rank_tolerance)
        norms = np.linalg.norm(H, axis=(1, 2))
        peak = norms.max()
        if peak == 0.0 or norms[-1] < tail_ratio * peak or 2 * L > max_L:
            if peak > 0 and norms[-1] >= tail_ratio * peak:
                warnings.warn(f"FIR tail check failed at L={L}: ratio {norms[-1] / peak:.3g}")
            return MarkovSequence(H)
        L *= 2


# ---------------------------------------------------------------- M estimate

@dataclass(frozen=True)
class Gammas:
    G0: np.ndarray
    G1: np.ndarray
    i: int
    sel: IndexSelection


def build_gammas(data: IoDataset, markov, i: int, sel: IndexSelection | None = None,
                 j: int | None = None, k0: int = 0) -> Gammas:
    """Data matrices ``G0`` and ``G1`` for an order-``i`` filter.

    Column ``c`` uses the window starting at ``k0 + c``; ``j`` columns are used
    (default: every window that fits, ``T - i - k0``).
    """
    sel = sel or IndexSelection(l=data.l, m=data.m)
    if (sel.l, sel.m) != (data.l, data.m):
        raise ValueError("index selection does not match the dataset dimensions")
    avail = data.T - k0 - i
    if j is None:
        j = avail
    if j < 1 or j > avail:
        raise ValueError(f"need at least i+j+1 = {i + j + k0 + 1} samples, have {data.T}")
    blocks = filter_blocks(markov, i)
    D = select(blocks.D, sel, "rows_drop_p", i)
    Dp = select(blocks.D_plus, sel, "rows_drop_p", i)
    Ui = window_matrix(data.U, i, k0, j)
    Y0 = select(window_matrix(data.Y, i, k0, j), sel, "rows_drop_p", i)
    Y1 = select(window_matrix(data.Y, i, k0 + 1, j), sel, "rows_drop_p", i)
    return Gammas(Y0 - D @ Ui, Y1 - Dp @ Ui, i, sel)


@dataclass(frozen=True)
class MEstimate:
    M: np.ndarray
    raw_M: np.ndarray
    i: int
    sel: IndexSelection
    K1: np.ndarray
    K2: np.ndarray
    residual_norm: float
    rho: float

    @property
    def structure_error(self) -> float:
        """Frobenius distance of the raw top block from ``[0 I]``."""
        lp = self.sel.l_prime
        return float(np.linalg.norm(self.raw_M[:(self.i - 1) * lp] - self.M[:(self.i - 1) * lp]))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.M, delimiter=",", fmt="%.17g",
                   header=f"M i={self.i} p={list(self.sel.p)} rho={self.rho!r}")


def shift_structure(i: int, lp: int) -> np.ndarray:
    """The ``[0 I]`` top block of ``M``."""
    top = np.zeros(((i - 1) * lp, i * lp))
    top[:, lp:] = np.eye((i - 1) * lp)
    return top


def estimate_M(g: Gammas, rank_tolerance: float = DEFAULT_RANK_TOL,
               stability_margin: float = 1e-6, enforce: bool = True) -> MEstimate:
    """``M = G1 pinv(G0)`` with the shift structure imposed on the top rows."""
    G0, G1, i = g.G0, g.G1, g.i
    lp = g.sel.l_prime
    if lp == 0:
        raise ValueError("no outputs left after removing p")
    rank = numerical_rank(G0, rank_tolerance)
    if rank < G0.shape[0]:
        raise RankDeficiencyError(
            f"G0 has rank {rank} < {G0.shape[0]} rows; use more data (larger j) "
            "or a richer excitation"
        )
    raw = G1 @ pinv_tol(G0, rank_tolerance)
    M = raw.copy()
    if enforce:
        M[:(i - 1) * lp] = shift_structure(i, lp)
    resid = float(np.linalg.norm(G1 - M @ G0))
    rho = spectral_radius(M)
    if rho >= 1.0 - stability_margin:
        warnings.warn(f"estimated M is not Schur stable (spectral radius {rho:.6f})")
    K1 = M[(i - 1) * lp:, :lp].copy()
    K2 = M[(i - 1) * lp:, lp:].copy()
    return MEstimate(M, raw, i, g.sel, K1, K2, resid, rho)


def identify(data: IoDataset, i: int, sel: IndexSelection | None = None,
             L: int | None = None) -> tuple[MarkovSequence, MEstimate]:
    """Markov parameters and ``M`` from one healthy record."""
    markov = estimate_markov(data, L=L, i=i)
    return markov, estimate_M(build_gammas(data, markov, i, sel))


def exact_M(model, i: int, sel: IndexSelection | None = None) -> np.ndarray:
    """``C_{+} pinv(C)`` from the model, with ``C`` the ``i``-block observability stack."""
    sel = sel or IndexSelection(l=model.l, m=model.m)
    rows = [c - 1 for c in sel.not_p]
    Ci = model.observability(i, rows)
    return Ci @ model.A @ np.linalg.pinv(Ci)
