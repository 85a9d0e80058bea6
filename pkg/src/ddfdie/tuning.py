"""Offline tuning of fault estimation filters from healthy data.

On healthy data an estimation filter should output zero. Whatever it does
output is the estimation error, and that error follows an LTI system driven by
the filter inputs ``Z = [U^{q-}; Y^{p-}]``:

    xi(t+1) = A_r xi(t) + Bc Z(t)
    e(t)    = xi(t) + G1 U(t)

where ``e = -(eta - Y + D U)`` is the negated raw residual. ``A_r`` is known, so
``Bc`` and ``G1`` follow from a linear regression on lagged ``Z`` once
``A_r^lambda`` is negligible. Adding them back to the filter gives the tuned
filter.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .runtime import estimate_fault, filter_states, raw_residual
from .sim import IoDataset
from .structmat import DEFAULT_RANK_TOL, numerical_rank, pinv_tol, spectral_radius

ESTIMATION_KINDS = ("sensor_estimation", "actuator_estimation")
DEFAULT_RATIO = 0.7
DEFAULT_LAMBDA_TOL = 1e-6


class TuningError(ValueError):
    """The tuning data or the base filter do not support an error-dynamics fit."""


def _require_estimator(f):
    if f.kind not in ESTIMATION_KINDS:
        raise ValueError(f"tuning applies to estimation filters, got {f.kind}")


# ---------------------------------------------------------------- data handling

def split_data(data: IoDataset, ratio: float = DEFAULT_RATIO, lam: int = 0,
               min_length: int = 1) -> tuple[IoDataset, IoDataset]:
    """Contiguous split into an identification prefix and a tuning suffix.

    Both parts must be longer than ``max(min_length, lam)``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    cut = int(round(ratio * data.T))
    first, second = cut, data.T - cut
    need = max(int(min_length), int(lam))
    if first <= need or second <= need:
        raise ValueError(
            f"segments of {first} and {second} samples are too short: each must exceed "
            f"{need} (the truncation depth lambda={lam} and identification minimum {min_length})"
        )
    return data.segment(0, cut), data.segment(cut, data.T)


def choose_lambda(A_r, tol: float = DEFAULT_LAMBDA_TOL, cap: int | None = None) -> int:
    """Smallest ``lam`` with ``||A_r^lam||_2 < tol``."""
    A = np.asarray(A_r, dtype=float)
    if spectral_radius(A) >= 1.0:
        raise TuningError("A_r must be Schur stable to truncate its impulse response")
    cap = 10_000 if cap is None else int(cap)
    P = np.eye(A.shape[0])
    for lam in range(1, cap + 1):
        P = P @ A
        nrm = np.linalg.norm(P, 2)
        if nrm < tol:
            return lam
    warnings.warn(f"lambda capped at {cap}: ||A_r^lambda|| = {nrm:.3g} >= {tol:g}")
    return cap


def _z_columns(f) -> np.ndarray:
    """Columns of ``[B_r L_r]`` that are free to tune.

    For sensor estimators the ``L_r`` columns multiplying the suspect sensors
    were zeroed by design and must stay zero.
    """
    nb = f.B_r.shape[1]
    if f.kind == "sensor_estimation":
        suspect = set(f.spec.sel.block_rows("p", f.i, keep=True).tolist())
        keep_L = np.array([c for c in range(f.L_r.shape[1]) if int(f.y_rows[c]) not in suspect],
                          dtype=int)
    else:
        keep_L = np.arange(f.L_r.shape[1])
    return np.concatenate([np.arange(nb), nb + keep_L]).astype(int)


def feedthrough_mask(f) -> np.ndarray:
    """Entries of ``D`` that are not structurally zero (block strictly lower triangular)."""
    row_block = np.asarray(f.y_out) // f.l
    col_block = np.arange(f.D.shape[1]) // f.m
    return row_block[:, None] > col_block[None, :]


def _drive(f, data: IoDataset) -> tuple[np.ndarray, np.ndarray]:
    """Filter input windows ``Z`` (all ``[B_r L_r]`` columns) and full ``U`` windows."""
    _, Uw, Yw = filter_states(f, data)
    Z = np.vstack([Uw[f.u_rows], Yw[f.y_rows]])
    return Z, Uw


def build_error_trace(f, segment: IoDataset, eta0=None) -> np.ndarray:
    """Estimation error ``e = -(eta - Y + D U)`` of ``f`` on healthy data.

    ``e`` has one row per filter state; its fault-channel block equals the
    negated fault estimate for sensor estimators.
    """
    _require_estimator(f)
    return -raw_residual(f, segment, eta0)


# ---------------------------------------------------------------- identification

@dataclass(frozen=True)
class ErrorDynamicsEstimate:
    """Identified error dynamics of an estimation filter.

    Attributes
    ----------
    B_hat : (n_eta, width of [B_r L_r])
        Input matrix on ``[U^{q-}; Y^{p-}]``; columns of suspect sensors are zero.
    G1_hat : (n_eta, i m)
        Feedthrough on the full ``U`` window.
    lam : int
        Truncation depth.
    residual : float
        Frobenius norm of the regression residual.
    rank_ok : bool
        Whether the lagged regressor had full row rank.
    """

    B_hat: np.ndarray
    G1_hat: np.ndarray
    lam: int
    residual: float
    rank_ok: bool
    base_filter_id: str = ""
    kind: str = ""

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "residual": self.residual, "rank_ok": self.rank_ok,
                "base_filter_id": self.base_filter_id, "kind": self.kind}

    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "B_hat.csv", self.B_hat, delimiter=",", fmt="%.17g")
        np.savetxt(out / "G1_hat.csv", self.G1_hat, delimiter=",", fmt="%.17g")
        (out / "error_dynamics.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def lagged_regressor(Z: np.ndarray, U: np.ndarray, lam: int) -> np.ndarray:
    """Rows ``[Z(t-lam); ...; Z(t-1); U(t)]`` for ``t = lam .. N-1`` (as columns)."""
    nz, N = Z.shape
    j = N - lam
    if j < 1:
        raise TuningError(f"lambda={lam} leaves no regression columns for {N} samples")
    blocks = [Z[:, a:a + j] for a in range(lam)]
    blocks.append(U[:, lam:lam + j])
    return np.vstack(blocks)


def solve_error_dynamics(E: np.ndarray, Z: np.ndarray, U: np.ndarray, A_r, lam: int,
                         rank_tolerance: float = DEFAULT_RANK_TOL, G_mask=None):
    """Least-squares ``(Bc, G1)`` with ``e(t) = sum_b A^b Bc Z(t-1-b) + G1 U(t)``.

    First ``T = E pinv(Zlag)``, then ``[Bc; G1]`` from the stacked impulse
    response blocks ``[T_b] = [A^b Bc]`` by a pseudo-inverse of the
    observability-like stack.

    Returns ``(Bc, G1, residual, rank_ok)``.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A_r, dtype=float)
    n, nz, nu = A.shape[0], Z.shape[0], U.shape[0]
    if E.shape[0] != n:
        raise ValueError(f"error trace has {E.shape[0]} rows, A_r is {n}x{n}")
    if lam >= E.shape[1]:
        raise TuningError(f"lambda={lam} exceeds the {E.shape[1]} available samples")
    Zl = lagged_regressor(Z, U, lam)
    if not np.any(Zl):
        raise TuningError("regressor is identically zero; the tuning data carry no excitation")
    Et = E[:, lam:]
    rank_ok = numerical_rank(Zl, rank_tolerance) == Zl.shape[0]
    T = Et @ pinv_tol(Zl, rank_tolerance)
    # T = [T_{lam-1} ... T_0 | G1] with T_b = A^b Bc
    Tb = np.vstack([T[:, (lam - 1 - b) * nz:(lam - b) * nz] for b in range(lam)])
    obs = np.vstack([np.linalg.matrix_power(A, b) for b in range(lam)])
    Bc = np.linalg.pinv(obs) @ Tb
    G1 = T[:, lam * nz:lam * nz + nu]
    if G_mask is not None:
        G1 = np.where(G_mask, G1, 0.0)
    pred = sum(np.linalg.matrix_power(A, lam - 1 - a) @ Bc @ Zl[a * nz:(a + 1) * nz]
               for a in range(lam)) + G1 @ Zl[lam * nz:]
    residual = float(np.linalg.norm(Et - pred))
    return Bc, G1, residual, rank_ok


def solve_error_dynamics_structured(E: np.ndarray, Z: np.ndarray, U: np.ndarray, A_r, lam: int,
                                    rank_tolerance: float = DEFAULT_RANK_TOL, G_mask=None,
                                    instruments=None):
    """Same cost as :func:`solve_error_dynamics`, minimized directly over ``(Bc, G1)``.

    The prediction is linear in ``vec(Bc)`` and ``vec(G1)``, so the exact
    minimizer comes from one least-squares problem with a Kronecker regressor.
    Unlike the two-step solve it stays consistent when the lagged regressor is
    rank deficient (for example when ``Y`` is nearly a function of past ``U``).

    ``instruments`` (rows aligned with the regression columns) turns the fit
    into two-stage least squares: errors and regressors are projected on the
    row space of the instruments first. With the lagged input as instrument
    this removes the bias caused by measurement noise that appears both in
    the error trace and in the ``Y`` rows of the regressor.
    """
    E = np.asarray(E, dtype=float)
    A = np.asarray(A_r, dtype=float)
    n, nz, nu = A.shape[0], Z.shape[0], U.shape[0]
    if E.shape[0] != n:
        raise ValueError(f"error trace has {E.shape[0]} rows, A_r is {n}x{n}")
    if lam >= E.shape[1]:
        raise TuningError(f"lambda={lam} exceeds the {E.shape[1]} available samples")
    Zl = lagged_regressor(Z, U, lam)
    if not np.any(Zl):
        raise TuningError("regressor is identically zero; the tuning data carry no excitation")
    rank_ok = numerical_rank(Zl, rank_tolerance) == Zl.shape[0]
    Et = E[:, lam:]
    if instruments is not None:
        W = np.asarray(instruments, dtype=float)
        if W.shape[1] != Zl.shape[1]:
            raise ValueError("instruments must have one column per regression sample")
        _, sv, Vt = np.linalg.svd(W, full_matrices=False)
        basis = Vt[sv > rank_tolerance * sv[0]].T
        Et, Zl = Et @ basis, Zl @ basis
    # vec(A^b Bc X) = (X^T kron A^b) vec(Bc), column-major vec
    Phi_B = sum(np.kron(Zl[a * nz:(a + 1) * nz].T, np.linalg.matrix_power(A, lam - 1 - a))
                for a in range(lam))
    free_G = np.ones(n * nu, dtype=bool) if G_mask is None else np.asarray(G_mask, bool).reshape(-1, order="F")
    Phi_G = np.kron(Zl[lam * nz:].T, np.eye(n))[:, free_G]
    Phi = np.hstack([Phi_B, Phi_G])
    theta, *_ = np.linalg.lstsq(Phi, Et.reshape(-1, order="F"), rcond=rank_tolerance)
    Bc = theta[:n * nz].reshape(n, nz, order="F")
    g = np.zeros(n * nu)
    g[free_G] = theta[n * nz:]
    G1 = g.reshape(n, nu, order="F")
    residual = float(np.linalg.norm(Et.reshape(-1, order="F") - Phi @ theta))
    return Bc, G1, residual, rank_ok


def identify_error_dynamics(f, segment: IoDataset, lam: int | None = None, eta0=None,
                            lambda_tol: float = DEFAULT_LAMBDA_TOL,
                            rank_tolerance: float = DEFAULT_RANK_TOL,
                            method: str = "structured",
                            structural_G: bool | None = None,
                            instrumented: bool = True,
                            settle: int = 0) -> ErrorDynamicsEstimate:
    """Identify ``(B_hat, G1_hat)`` of the error dynamics of ``f`` on a healthy segment.

    The filter runs over the whole segment; the first ``settle`` outputs are
    left out of the regression (use it when the plant is still settling from
    a change of operating point at the start of the segment).

    ``method="pinv"`` is the two-step solve (impulse blocks by pseudo-inverse,
    then ``Bc`` from the stacked blocks); ``method="structured"`` minimizes the
    same cost directly. Both agree when the lagged regressor has full row rank.
    """
    solvers = {"pinv": solve_error_dynamics, "structured": solve_error_dynamics_structured}
    if method not in solvers:
        raise ValueError(f"method must be one of {sorted(solvers)}")
    _require_estimator(f)
    N = segment.T - f.i + 1
    if lam is None:
        lam = choose_lambda(f.A_r, lambda_tol, cap=max(N - 1 - settle, 1))
    if lam + settle >= N:
        raise TuningError(
            f"lambda={lam} plus settle={settle} must be below the {N} filter outputs of the tuning segment"
        )
    E = build_error_trace(f, segment, eta0)[:, settle:]
    Z, Uw = _drive(f, segment)
    Z, Uw = Z[:, settle:], Uw[:, settle:]
    cols = _z_columns(f)
    if structural_G is None:
        # the suspect-sensor columns dropped for sensor estimators are not exactly
        # zero once M is estimated; an unstructured G1 absorbs their input-driven part
        structural_G = f.kind == "actuator_estimation"
    mask = feedthrough_mask(f) if structural_G else None
    extra = {}
    if instrumented and method == "structured":
        extra["instruments"] = lagged_regressor(Uw, Uw, lam)
    Bc, G1, resid, rank_ok = solvers[method](E, Z[cols], Uw, f.A_r, lam, rank_tolerance, mask, **extra)
    B_hat = np.zeros((f.n_eta, Z.shape[0]))
    B_hat[:, cols] = Bc
    if not rank_ok and method == "pinv":
        warnings.warn("tuning regressor is rank deficient; the error-dynamics estimate may be biased")
    return ErrorDynamicsEstimate(B_hat, G1, int(lam), resid, bool(rank_ok), f.spec.label(), f.kind)


# ---------------------------------------------------------------- tuned filters

@dataclass(frozen=True)
class TunedFilter:
    """Estimation filter with identified error dynamics folded in.

    Behaves like a :class:`FilterRealization` (attribute access falls through
    to ``realization``), so the runtime functions accept it directly.
    """

    base: object
    est: ErrorDynamicsEstimate
    realization: object

    @property
    def B_tilde(self) -> np.ndarray:
        return self.realization.Bz

    @property
    def D_tilde(self) -> np.ndarray:
        return self.realization.D

    @property
    def base_filter_id(self) -> str:
        return self.base.spec.label()

    def __getattr__(self, name):
        # only reached for attributes not defined above
        return getattr(object.__getattribute__(self, "realization"), name)

    def save(self, directory) -> None:
        out = Path(directory)
        self.realization.save(out)
        self.est.save(out / "error_dynamics")
        meta = {"tuned": True, "base_filter_id": self.base_filter_id, **self.est.to_dict()}
        (out / "tuning.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def tune_filter(base, est: ErrorDynamicsEstimate) -> TunedFilter:
    """``[B_r L_r] + B_hat`` and ``D + G1_hat``; ``A_r`` is unchanged."""
    _require_estimator(base)
    nb = base.B_r.shape[1]
    if est.B_hat.shape != (base.n_eta, nb + base.L_r.shape[1]) or est.G1_hat.shape != base.D.shape:
        raise ValueError(
            f"error-dynamics estimate {est.B_hat.shape}/{est.G1_hat.shape} does not fit filter "
            f"with [B_r L_r] {(base.n_eta, nb + base.L_r.shape[1])} and D {base.D.shape}"
        )
    if est.kind and est.kind != base.kind:
        raise ValueError(f"estimate was identified for a {est.kind} filter, not {base.kind}")
    tuned = replace(
        base,
        B_r=base.B_r + est.B_hat[:, :nb],
        L_r=base.L_r + est.B_hat[:, nb:],
        D=base.D + est.G1_hat,
        spec=replace(base.spec, name=base.spec.label() + "_tuned"),
    )
    return TunedFilter(base, est, tuned)


def tune(f, segment: IoDataset, lam: int | None = None, **kw) -> TunedFilter:
    """Identify the error dynamics of ``f`` on ``segment`` and return the tuned filter."""
    return tune_filter(f, identify_error_dynamics(f, segment, lam, **kw))


def predict_error_bound(est: ErrorDynamicsEstimate, A_r, input_trace, n_grid: int = 512,
                        output_map=None) -> float:
    """``||C (zI - A_r)^{-1} [B_hat 0] + [0 C G1_hat]||_inf * ||[Z; U]||_2``.

    The H-infinity norm is the peak over ``n_grid`` points of the upper unit
    semicircle. ``input_trace`` stacks ``[Z; U]`` as returned by
    :func:`filter_input_trace`. ``output_map`` maps the error state to the
    fault estimate error (default identity, which bounds the whole error vector).
    """
    A = np.asarray(A_r, dtype=float)
    n = A.shape[0]
    C = np.eye(n) if output_map is None else np.asarray(output_map, dtype=float)
    nu = est.G1_hat.shape[1]
    Bfull = np.hstack([est.B_hat, np.zeros((n, nu))])
    Gfull = C @ np.hstack([np.zeros_like(est.B_hat), est.G1_hat])
    if not np.any(Bfull) and not np.any(Gfull):
        return 0.0
    peak = 0.0
    for w in np.linspace(0.0, np.pi, n_grid):
        Hz = C @ np.linalg.solve(np.exp(1j * w) * np.eye(n) - A, Bfull) + Gfull
        peak = max(peak, float(np.linalg.norm(Hz, 2)))
    return peak * float(np.linalg.norm(np.asarray(input_trace, dtype=float)))


def filter_input_trace(f, data: IoDataset) -> np.ndarray:
    """Stacked ``[Z; U]`` windows that drive the error dynamics of ``f``."""
    Z, Uw = _drive(f, data)
    return np.vstack([Z, Uw])


def error_norm(f, data: IoDataset) -> float:
    """``||f_hat||_2`` of an estimation filter on healthy data (the realized bias)."""
    return float(np.linalg.norm(estimate_fault(f, data).f_hat))
