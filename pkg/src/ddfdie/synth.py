"""Filter synthesis from (estimated or exact) Markov parameters and ``M``.

A filter of order ``i`` has state ``eta`` of size ``i l'`` and runs

    eta(k+1) = A_r eta(k) + B_r U^{q-}(k-i) + L_r Y^{p-}(k-i)
    r(k)     = eta(k) - Y^{p-}(k-i) + D U(k-i)

with the design equations

    A_r + L_r = M,   L_r D^{q+} = [curlyD_+^{q+}, 0],   B_r = (curlyD_+ I^m - L_r D)^{q-}.

Sensor estimation filters are built with ``p`` empty and then zero the columns
of ``L_r`` that multiply the suspect sensors.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.signal import place_poles

from .ident import MarkovSequence, MEstimate, exact_M
from .structmat import (
    DEFAULT_RANK_TOL,
    IndexSelection,
    filter_blocks,
    numerical_rank,
    pinv_tol,
    select,
    spectral_radius,
)

KINDS = (
    "detection",
    "actuator_isolation",
    "sensor_isolation",
    "sensor_estimation",
    "actuator_estimation",
)
DEFAULT_POLE = 0.3


class InfeasibleFilterError(ValueError):
    """No Schur-stable ``A_r`` satisfies the design equations."""

    def __init__(self, msg, best_rho=None, zeros=None):
        super().__init__(msg)
        self.best_rho = best_rho
        self.zeros = zeros


class UndeterminedDegreeError(ValueError):
    """No relative degree up to the requested bound."""


@dataclass(frozen=True)
class FilterSpec:
    """Order ``i``, channel selection and purpose of a filter.

    ``poles`` are the requested diagonal entries of ``A_r`` when ``A_r`` is free.
    A short tuple is tiled over the ``i`` blocks; ``None`` means 0.3 everywhere.
    """

    i: int
    sel: IndexSelection
    kind: str = "detection"
    poles: tuple | None = None
    name: str = ""

    def __post_init__(self):
        if self.i < 1:
            raise ValueError("filter order i must be >= 1")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        sel = self.sel
        if self.kind == "detection" and (sel.p or sel.q):
            raise ValueError("detection filters need p and q empty")
        if self.kind == "sensor_estimation" and (sel.q or not sel.p):
            raise ValueError("sensor_estimation needs q empty and p non-empty")
        if self.kind == "sensor_isolation" and (sel.q or not sel.p):
            raise ValueError("sensor_isolation needs q empty and p non-empty")
        if self.kind in ("actuator_isolation", "actuator_estimation") and not sel.q:
            raise ValueError(f"{self.kind} needs a non-empty q")
        if self.poles is not None:
            object.__setattr__(self, "poles", tuple(float(v) for v in self.poles))
            if any(abs(v) >= 1 for v in self.poles):
                raise ValueError("requested poles must lie inside the unit circle")

    @property
    def design_sel(self) -> IndexSelection:
        """Selection used to build ``M`` and the blocks (``p`` dropped for sensor estimation)."""
        return self.sel.without_p() if self.kind == "sensor_estimation" else self.sel

    def pole_vector(self) -> np.ndarray:
        n_eta = self.i * self.design_sel.l_prime
        if self.poles is None:
            return np.full(n_eta, DEFAULT_POLE)
        reps = -(-n_eta // len(self.poles))
        return np.tile(np.asarray(self.poles), reps)[:n_eta]

    def label(self) -> str:
        if self.name:
            return self.name
        return f"{self.kind}_i{self.i}_p{''.join(map(str, self.sel.p))}_q{''.join(map(str, self.sel.q))}"

    def to_dict(self) -> dict:
        return {"i": self.i, "kind": self.kind, "poles": list(self.poles) if self.poles else None,
                "name": self.label(), **self.sel.to_dict()}


@dataclass(frozen=True)
class FilterRealization:
    """A synthesized filter.

    ``y_rows`` / ``u_rows`` are the 0-based rows of the stacked ``Y`` / ``U``
    windows (``i`` samples) that drive the state. The residual is
    ``eta - Y[y_out] + D U`` restricted to ``r_rows``; ``y_out`` equals
    ``y_rows`` except for reduced filters, and ``D`` acts on the full ``U``.
    """

    spec: FilterSpec
    A_r: np.ndarray
    B_r: np.ndarray
    L_r: np.ndarray
    D: np.ndarray
    curlyD_plus: np.ndarray
    M: np.ndarray
    y_rows: np.ndarray
    u_rows: np.ndarray
    r_rows: np.ndarray
    l: int
    m: int
    exact: bool = False
    reduced: bool = False
    theta_rho: float | None = None
    norms: dict = field(default_factory=dict)
    y_out: np.ndarray | None = None

    def __post_init__(self):
        if self.y_out is None:
            object.__setattr__(self, "y_out", np.asarray(self.y_rows))

    @property
    def n_eta(self) -> int:
        return self.A_r.shape[0]

    @property
    def i(self) -> int:
        return self.spec.i

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def Bz(self) -> np.ndarray:
        """``[B_r L_r]`` acting on ``[U^{q-}; Y^{p-}]``."""
        return np.hstack([self.B_r, self.L_r])

    @property
    def rho(self) -> float:
        return spectral_radius(self.A_r)

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "n_eta": self.n_eta,
            "l": self.l,
            "m": self.m,
            "exact": self.exact,
            "reduced": self.reduced,
            "spectral_radius": self.rho,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in np.linalg.eigvals(self.A_r)],
            "residual_norms": self.norms,
        }

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for name in ("A_r", "B_r", "L_r", "D", "curlyD_plus", "M"):
            np.savetxt(out / f"{name}.csv", getattr(self, name), delimiter=",", fmt="%.17g")
        with (out / "rows.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            for name in ("y_rows", "u_rows", "r_rows", "y_out"):
                w.writerow([name] + [int(v) for v in getattr(self, name)])
        (out / "filter.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "FilterRealization":
        src = Path(directory)
        meta = json.loads((src / "filter.json").read_text())
        sd = meta["spec"]
        sel = IndexSelection(sd["p"], sd["q"], l=sd["l"], m=sd["m"])
        spec = FilterSpec(sd["i"], sel, sd["kind"], tuple(sd["poles"]) if sd["poles"] else None,
                          sd.get("name", ""))
        mats = {}
        for name in ("A_r", "B_r", "L_r", "D", "curlyD_plus", "M"):
            mats[name] = np.atleast_2d(np.loadtxt(src / f"{name}.csv", delimiter=",", ndmin=2))
        rows = {}
        with (src / "rows.csv").open() as fh:
            for r in csv.reader(fh):
                rows[r[0]] = np.array([int(v) for v in r[1:]], dtype=int)
        n = mats["A_r"].shape[0]
        mats["B_r"] = mats["B_r"].reshape(n, -1)
        mats["L_r"] = mats["L_r"].reshape(n, -1)
        mats["D"] = mats["D"].reshape(n, -1)
        return cls(spec, **mats, **rows, l=meta["l"], m=meta["m"], exact=meta["exact"],
                   reduced=meta["reduced"], norms=meta["residual_norms"])


# ---------------------------------------------------------------- diagnostics

def relative_degree(markov, sel: IndexSelection | None = None, i_max: int = 10,
                    rank_tolerance: float = 1e-6) -> int:
    """Smallest ``tau`` with ``H_{b, p-}`` negligible for ``b < tau`` and full column rank at ``tau``.

    Ranks are judged relative to the largest singular value of the tested
    block, and negligibility relative to ``||H_0..H_i_max||``.
    """
    H = np.asarray(getattr(markov, "H", markov))
    sel = sel or IndexSelection(l=H.shape[1], m=H.shape[2])
    rows = [c - 1 for c in sel.not_p]
    Hp = H[:, rows, :]
    scale = max(np.linalg.norm(Hp[:i_max + 1].reshape(-1)), np.finfo(float).tiny)
    for tau in range(min(i_max, Hp.shape[0] - 1) + 1):
        blk = Hp[tau]
        if np.linalg.norm(blk) <= rank_tolerance * scale:
            continue
        if numerical_rank(blk, rank_tolerance) == blk.shape[1]:
            return tau
        break
    raise UndeterminedDegreeError(
        f"no relative degree <= {i_max}: first non-zero block is not full column rank"
    )


def observability_index(model, sel: IndexSelection | None = None, i_max: int | None = None) -> int:
    """Smallest depth ``nu`` at which the ``C^{p-}`` observability stack has rank ``n``."""
    sel = sel or IndexSelection(l=model.l, m=model.m)
    rows = [c - 1 for c in sel.not_p]
    i_max = i_max or model.n
    for nu in range(1, i_max + 1):
        if np.linalg.matrix_rank(model.observability(nu, rows)) == model.n:
            return nu
    raise ValueError(f"(C^{{p-}}, A) is not observable within depth {i_max}")


def transmission_zeros(model, sel: IndexSelection | None = None) -> np.ndarray:
    """Finite invariant zeros from input channels ``q`` to outputs ``~p``.

    Uses the generalized eigenvalues of the Rosenbrock pencil for square
    subsystems; for non-square ones the zeros common to all square
    sub-pencils are returned (usually none).
    """
    sel = sel or IndexSelection(l=model.l, m=model.m)
    cols = [c - 1 for c in (sel.q or range(1, model.m + 1))]
    rows = [c - 1 for c in sel.not_p]
    B = model.B[:, cols]
    C = model.C[rows]
    n, mq, lp = model.n, B.shape[1], C.shape[0]

    def square_zeros(Bs, Cs):
        k = Bs.shape[1]
        P = np.block([[model.A, Bs], [Cs, np.zeros((k, k))]])
        E = np.zeros_like(P)
        E[:n, :n] = np.eye(n)
        z = scipy.linalg.eigvals(P, E)
        return z[np.isfinite(z)]

    if lp == mq:
        return square_zeros(B, C)
    if lp > mq:
        from itertools import combinations

        cands = None
        for rsub in combinations(range(lp), mq):
            z = square_zeros(B, C[list(rsub)])
            if cands is None:
                cands = z
            else:
                cands = np.array([c for c in cands if np.min(np.abs(z - c), initial=np.inf) < 1e-6])
            if cands.size == 0:
                break
        return cands if cands is not None else np.array([])
    return np.array([])


# ---------------------------------------------------------------- core solver

def _design_blocks(markov, spec: FilterSpec):
    sel = spec.design_sel
    i = spec.i
    blocks = filter_blocks(markov, i)
    D = select(blocks.D, sel, "rows_drop_p", i)
    curly = select(blocks.curlyD_plus, sel, "rows_drop_p", i)
    # curlyD_+ I^m : the first block column of an il' x im matrix
    D1 = np.zeros_like(D)
    D1[:, :sel.m] = curly
    return D, D1, curly


def _residual_rows(spec: FilterSpec, n_eta: int, l: int) -> np.ndarray:
    if spec.kind in ("actuator_isolation",):
        return np.arange(min(spec.sel.m, n_eta))
    return np.arange(n_eta)


def _equation_norms(A_r, L_r, B_r, M, D, D1, sel, i, l_cols_zero=None) -> dict:
    eq27 = float(np.linalg.norm(A_r + L_r - M))
    out = {"eq_sum": eq27}
    if sel.q:
        Dq = select(D, sel, "cols_keep_q", i)
        rhs = select(D1, sel, "cols_keep_q", i)
        out["eq_q"] = float(np.linalg.norm(L_r @ Dq - rhs))
    target = select(D1 - L_r @ D, sel, "cols_drop_q", i) if sel.q else D1 - L_r @ D
    out["eq_B"] = float(np.linalg.norm(B_r - target))
    return out


def _sensor_injection(M: np.ndarray, spec: FilterSpec, poles: np.ndarray):
    """``L`` with zero columns at ``p, 2p, ..`` making ``M - L`` Schur."""
    i, sel = spec.i, spec.sel
    zero_cols = sel.block_rows("p", i, keep=True)
    keep_cols = sel.block_rows("p", i, keep=False)
    L = M - np.diag(poles)
    L[:, zero_cols] = 0.0
    A_r = M - L
    method = "diagonal"
    if spectral_radius(A_r) >= 1.0 - 1e-9:
        # Output injection through the healthy coordinates only: A_r = M - K S
        S = np.zeros((keep_cols.size, M.shape[0]))
        S[np.arange(keep_cols.size), keep_cols] = 1.0
        want = np.linspace(0.1, 0.5, M.shape[0])
        try:
            K = place_poles(M.T, S.T, want).gain_matrix.T
        except ValueError as exc:
            raise InfeasibleFilterError(
                f"sensor filter: (M, healthy rows) not detectable for pole placement ({exc})",
                best_rho=spectral_radius(A_r),
            ) from None
        L = np.zeros_like(M)
        L[:, keep_cols] = K
        A_r = M - L
        method = "placement"
    return A_r, L, method


def _theta_search(M, L0, P, rng, budget=200, gammas=(0.1, 0.5, 1.0)):
    """Search ``L = L0 + Theta P`` for a Schur ``M - L``; returns the best found."""
    best_L = L0
    best_rho = spectral_radius(M - L0)
    if best_rho < 1.0 or not np.any(P):
        return best_L, best_rho
    n = M.shape[0]
    for g in gammas:
        for _ in range(budget):
            Th = rng.uniform(-g, g, size=(n, n))
            L = L0 + Th @ P
            rho = spectral_radius(M - L)
            if rho < best_rho:
                best_L, best_rho = L, rho
        if best_rho < 1.0:
            break
    return best_L, best_rho


def solve_design(M: np.ndarray, markov, spec: FilterSpec, seed: int = 0,
                 rank_tolerance: float = DEFAULT_RANK_TOL, exact: bool = False,
                 zeros_hint=None) -> FilterRealization:
    """Solve the design equations for a given ``M`` and Markov sequence."""
    sel = spec.design_sel
    i = spec.i
    D, D1, curly = _design_blocks(markov, spec)
    n_eta = D.shape[0]
    if M.shape != (n_eta, n_eta):
        raise ValueError(f"M is {M.shape}, filter needs {n_eta}x{n_eta}")
    poles = spec.pole_vector()
    theta_rho = None
    if spec.kind == "sensor_estimation":
        A_r, L, _ = _sensor_injection(M, spec, poles)
        B_r = D1 - L @ D
    elif not sel.q:
        A_r = np.diag(poles)
        L = M - A_r
        B_r = D1 - L @ D
    else:
        Dq = select(D, sel, "cols_keep_q", i)
        rhs = select(D1, sel, "cols_keep_q", i)
        Dq_pinv = pinv_tol(Dq, rank_tolerance)
        L0 = rhs @ Dq_pinv
        P = np.eye(n_eta) - Dq @ Dq_pinv
        L, theta_rho = _theta_search(M, L0, P, np.random.default_rng(seed))
        A_r = M - L
        if theta_rho >= 1.0:
            msg = (f"{spec.label()}: no Schur A_r found (best spectral radius {theta_rho:.4f}); "
                   "the input-to-output subsystem of the selected actuators is likely "
                   "non-minimum phase")
            if zeros_hint is not None and len(zeros_hint):
                msg += f"; transmission zeros {np.round(zeros_hint, 4).tolist()}"
            raise InfeasibleFilterError(msg, best_rho=theta_rho, zeros=zeros_hint)
        B_r = select(D1 - L @ D, sel, "cols_drop_q", i)
    norms = _equation_norms(A_r, L, B_r, M, D, D1, sel, i)
    l, m = sel.l, sel.m
    y_rows = sel.block_rows("p", i, keep=False)
    u_rows = sel.block_rows("q", i, keep=False)
    return FilterRealization(
        spec=spec, A_r=A_r, B_r=B_r, L_r=L, D=D, curlyD_plus=curly, M=M,
        y_rows=y_rows, u_rows=u_rows, r_rows=_residual_rows(spec, n_eta, l),
        l=l, m=m, exact=exact, theta_rho=theta_rho, norms=norms,
    )


def synthesize_data_driven(markov: MarkovSequence, M: MEstimate | np.ndarray, spec: FilterSpec,
                           seed: int = 0, rank_tolerance: float = DEFAULT_RANK_TOL) -> FilterRealization:
    """Filter from estimated Markov parameters and an estimated ``M``."""
    Mmat = M.M if isinstance(M, MEstimate) else np.asarray(M, dtype=float)
    if isinstance(M, MEstimate):
        if M.i != spec.i:
            raise ValueError(f"M was estimated for i={M.i}, spec has i={spec.i}")
        if M.sel.p != spec.design_sel.p:
            raise ValueError("M was estimated for a different output selection")
    n_lags = markov.L if isinstance(markov, MarkovSequence) else np.asarray(markov).shape[0] - 1
    if n_lags < spec.i:
        raise ValueError(f"need Markov parameters up to lag {spec.i}")
    return solve_design(Mmat, markov, spec, seed, rank_tolerance)


def synthesize_exact(model, spec: FilterSpec, seed: int = 0) -> FilterRealization:
    """Oracle filter from the true model (``M = C_+ pinv(C)``)."""
    sel = spec.design_sel
    M = exact_M(model, spec.i, sel)
    markov = MarkovSequence(model.markov(spec.i + 1), source="exact")
    zeros = None
    if sel.q:
        zeros = transmission_zeros(model, sel)
        if zeros.size and np.max(np.abs(zeros)) >= 1.0:
            bad = zeros[np.abs(zeros) >= 1.0]
            raise InfeasibleFilterError(
                f"{spec.label()}: subsystem from actuators {list(sel.q)} is non-minimum phase "
                f"(zeros {np.round(bad, 4).tolist()} outside the unit circle); "
                "no stable filter satisfies the design equations",
                zeros=zeros,
            )
    return solve_design(M, markov, spec, seed, exact=True, zeros_hint=zeros)


def reduce_filter(f: FilterRealization) -> FilterRealization:
    """Keep only the last ``l'`` states of a filter with ``q`` empty and diagonal ``A_r``."""
    if f.spec.sel.q:
        raise ValueError("reduction only applies to filters with q empty")
    A = f.A_r
    if np.any(A - np.diag(np.diag(A))):
        raise ValueError("reduction needs a diagonal A_r")
    lp = f.spec.design_sel.l_prime
    sl = slice((f.i - 1) * lp, f.i * lp)
    return replace(
        f,
        A_r=A[sl, sl].copy(),
        B_r=f.B_r[sl].copy(),
        L_r=f.L_r[sl].copy(),
        D=f.D[sl].copy(),
        r_rows=np.arange(lp),
        y_out=np.asarray(f.y_out)[sl],
        reduced=True,
    )


def default_order(model, sel: IndexSelection | None = None) -> int:
    """``max(nu_p, tau_p)`` for an exact model."""
    sel = sel or IndexSelection(l=model.l, m=model.m)
    nu = observability_index(model, sel)
    tau = relative_degree(model.markov(model.n + 1), sel, i_max=model.n)
    return max(nu, tau, 1)
