"""Discrete LTI simulation with additive faults, PRBS excitation and ZOH discretization."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.linalg import expm

from .kernels import lti_scan
from .structmat import spectral_radius


class ModelError(ValueError):
    """Inconsistent or invalid model data."""


class UnstableLoopError(ModelError):
    """The requested feedback loop is not Schur stable."""


@dataclass(frozen=True)
class StateSpaceModel:
    """``x(k+1) = A x + B (u + f_a) + w``, ``y = C x + f_s + v``.

    ``Q``, ``R`` and ``S`` form the joint covariance ``[[Q, S], [S^T, R]]`` of
    ``(w, v)``. Missing covariances default to zero (noise-free).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray | None = None
    R: np.ndarray | None = None
    S: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        C = np.asarray(self.C, dtype=float)
        C = C.reshape(-1, A.shape[0])
        n, l = A.shape[0], C.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got {A.shape}")
        Q = np.zeros((n, n)) if self.Q is None else np.asarray(self.Q, dtype=float)
        R = np.zeros((l, l)) if self.R is None else np.asarray(self.R, dtype=float)
        S = np.zeros((n, l)) if self.S is None else np.asarray(self.S, dtype=float)
        if Q.shape != (n, n) or R.shape != (l, l) or S.shape != (n, l):
            raise ModelError("covariance shapes do not match (n, l)")
        joint = np.block([[Q, S], [S.T, R]])
        if not np.allclose(joint, joint.T, atol=1e-12):
            raise ModelError("noise covariance is not symmetric")
        if joint.size and np.min(np.linalg.eigvalsh(joint)) < -1e-10:
            raise ModelError("noise covariance is not positive semidefinite")
        for name, val in zip("ABCQRS", (A, B, C, Q, R, S)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def l(self) -> int:
        return self.C.shape[0]

    @property
    def noise_cov(self) -> np.ndarray:
        return np.block([[self.Q, self.S], [self.S.T, self.R]])

    def with_noise(self, Q=None, R=None, S=None) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B, self.C, Q, R, S)

    def markov(self, L: int) -> np.ndarray:
        """Exact Markov parameters ``H_b = C A^b B`` for ``b = 0..L`` as (L+1, l, m)."""
        H = np.empty((L + 1, self.l, self.m))
        AkB = self.B.copy()
        for b in range(L + 1):
            H[b] = self.C @ AkB
            AkB = self.A @ AkB
        return H

    def observability(self, depth: int, rows: Sequence[int] | None = None) -> np.ndarray:
        """``[C; CA; ...; CA^(depth-1)]`` using output rows ``rows`` (0-based)."""
        C = self.C if rows is None else self.C[list(rows)]
        blocks, CAk = [], C
        for _ in range(depth):
            blocks.append(CAk)
            CAk = CAk @ self.A
        return np.vstack(blocks) if blocks else np.zeros((0, self.n))

    def is_observable(self) -> bool:
        return np.linalg.matrix_rank(self.observability(self.n)) == self.n

    def is_stable(self) -> bool:
        return spectral_radius(self.A) < 1.0


# ---------------------------------------------------------------- faults

@dataclass(frozen=True)
class Step:
    """Constant ``severity`` for ``k >= onset``."""

    onset: int
    severity: float

    def __call__(self, k: np.ndarray) -> np.ndarray:
        return np.where(k >= self.onset, float(self.severity), 0.0)


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(omega * k)`` for ``k >= onset`` (absolute time ``k``)."""

    onset: int
    amplitude: float
    omega: float

    def __call__(self, k: np.ndarray) -> np.ndarray:
        return np.where(k >= self.onset, self.amplitude * np.sin(self.omega * k), 0.0)


Waveform = Union[Step, Sinusoid, None]


def _waveform_dict(w: Waveform):
    if w is None:
        return None
    if isinstance(w, Step):
        return {"type": "step", "onset": w.onset, "severity": w.severity}
    return {"type": "sinusoid", "onset": w.onset, "amplitude": w.amplitude, "omega": w.omega}


def waveform_from_dict(d) -> Waveform:
    if d is None or d == "none" or (isinstance(d, dict) and d.get("type", "none") == "none"):
        return None
    kind = d["type"]
    if kind == "step":
        return Step(int(d["onset"]), float(d["severity"]))
    if kind == "sinusoid":
        return Sinusoid(int(d["onset"]), float(d["amplitude"]), float(d["omega"]))
    raise ValueError(f"unknown waveform type {kind!r}")


@dataclass(frozen=True)
class FaultScenario:
    """Per-channel actuator and sensor fault waveforms (``None`` = healthy)."""

    actuator: tuple = ()
    sensor: tuple = ()

    @classmethod
    def healthy(cls) -> "FaultScenario":
        return cls()

    def signals(self, T: int, m: int, l: int) -> tuple[np.ndarray, np.ndarray]:
        """Fault signals ``(f_a, f_s)`` of shapes ``(m, T)`` and ``(l, T)``."""
        if len(self.actuator) > m or len(self.sensor) > l:
            raise ModelError("fault scenario has more channels than the model")
        k = np.arange(T)
        fa = np.zeros((m, T))
        fs = np.zeros((l, T))
        for c, w in enumerate(self.actuator):
            if w is not None:
                fa[c] = w(k)
        for c, w in enumerate(self.sensor):
            if w is not None:
                fs[c] = w(k)
        return fa, fs

    @property
    def is_healthy(self) -> bool:
        return all(w is None for w in (*self.actuator, *self.sensor))

    def onset(self) -> int | None:
        ks = [w.onset for w in (*self.actuator, *self.sensor) if w is not None]
        return min(ks) if ks else None

    def to_dict(self) -> dict:
        return {
            "actuator": [_waveform_dict(w) for w in self.actuator],
            "sensor": [_waveform_dict(w) for w in self.sensor],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FaultScenario":
        return cls(
            tuple(waveform_from_dict(w) for w in d.get("actuator", [])),
            tuple(waveform_from_dict(w) for w in d.get("sensor", [])),
        )


# ---------------------------------------------------------------- data

@dataclass
class IoDataset:
    """Input record ``U`` (m, T) and output record ``Y`` (l, T)."""

    U: np.ndarray
    Y: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if self.U.shape[1] != self.Y.shape[1]:
            raise ModelError(
                f"U has {self.U.shape[1]} samples but Y has {self.Y.shape[1]}"
            )
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.Y))):
            raise ModelError("dataset contains non-finite entries")

    @property
    def T(self) -> int:
        return self.U.shape[1]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def l(self) -> int:
        return self.Y.shape[0]

    def segment(self, start: int, stop: int) -> "IoDataset":
        return IoDataset(self.U[:, start:stop], self.Y[:, start:stop], self.seed,
                         {**self.meta, "segment": [start, stop]})

    def to_csv(self, path) -> None:
        path = Path(path)
        header = ["k"] + [f"u{c + 1}" for c in range(self.m)] + [f"y{c + 1}" for c in range(self.l)]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.T):
                w.writerow([k] + [repr(float(v)) for v in self.U[:, k]]
                           + [repr(float(v)) for v in self.Y[:, k]])

    @classmethod
    def from_csv(cls, path) -> "IoDataset":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        ucols = [c for c, h in enumerate(header) if h.startswith("u")]
        ycols = [c for c, h in enumerate(header) if h.startswith("y")]
        return cls(body[:, ucols].T, body[:, ycols].T)


# ---------------------------------------------------------------- simulation

def _noise(model: StateSpaceModel, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    cov = model.noise_cov
    n = model.n
    if not np.any(cov):
        return np.zeros((n, T)), np.zeros((model.l, T))
    try:
        Lc = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        Lc = np.linalg.cholesky(cov + 1e-12 * np.eye(cov.shape[0]))
    e = Lc @ rng.standard_normal((cov.shape[0], T))
    return e[:n], e[n:]


def _check_input(model: StateSpaceModel, U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape[0] != model.m:
        raise ModelError(f"input has {U.shape[0]} channels, model expects {model.m}")
    if U.shape[1] < 1:
        raise ModelError("input must contain at least one sample")
    return U


def simulate(
    model: StateSpaceModel,
    U,
    scenario: FaultScenario | None = None,
    noise_on: bool = True,
    seed: int | None = None,
    x0=None,
) -> tuple[IoDataset, np.ndarray]:
    """Simulate the (possibly faulty) system for every column of ``U``.

    Returns the dataset (measured ``u`` and ``y``) and the state trace of shape
    ``(n, T + 1)``.
    """
    U = _check_input(model, U)
    T = U.shape[1]
    scenario = scenario or FaultScenario()
    fa, fs = scenario.signals(T, model.m, model.l)
    if noise_on:
        w, v = _noise(model, T, np.random.default_rng(seed))
    else:
        w, v = np.zeros((model.n, T)), np.zeros((model.l, T))
    drive = model.B @ (U + fa) + w
    X = lti_scan(model.A, drive, x0)
    Y = model.C @ X[:, :T] + fs + v
    return IoDataset(U, Y, seed, {"noise_on": noise_on}), X


def closed_loop_sim(
    model: StateSpaceModel,
    K_y,
    ref,
    scenario: FaultScenario | None = None,
    noise_on: bool = True,
    seed: int | None = None,
    x0=None,
) -> IoDataset:
    """Simulate under ``u(k) = -K_y y(k) + ref(k)``.

    The closed loop is an LTI system from ``ref`` to ``y``; the returned dataset
    uses ``ref`` as its input record ``U`` and stores the applied plant input in
    ``meta["u_applied"]``.
    """
    K = np.atleast_2d(np.asarray(K_y, dtype=float))
    if K.shape != (model.m, model.l):
        raise ModelError(f"feedback gain must be {model.m}x{model.l}, got {K.shape}")
    Acl = model.A - model.B @ K @ model.C
    rho = spectral_radius(Acl)
    if rho >= 1.0:
        raise UnstableLoopError(f"closed loop is unstable: spectral radius {rho:.4f}")
    ref = _check_input(model, ref)
    T = ref.shape[1]
    scenario = scenario or FaultScenario()
    fa, fs = scenario.signals(T, model.m, model.l)
    if noise_on:
        w, v = _noise(model, T, np.random.default_rng(seed))
    else:
        w, v = np.zeros((model.n, T)), np.zeros((model.l, T))
    # y = Cx + fs + v and u = -K y + ref, so the loop is linear in (ref, fa, fs, w, v)
    BK = model.B @ K
    drive = model.B @ (ref + fa) - BK @ (fs + v) + w
    X = lti_scan(Acl, drive, x0)
    Y = model.C @ X[:, :T] + fs + v
    u_applied = -K @ Y + ref
    return IoDataset(ref, Y, seed, {"noise_on": noise_on, "u_applied": u_applied,
                                    "closed_loop": True})


def closed_loop_model(model: StateSpaceModel, K_y) -> StateSpaceModel:
    """The reference-to-output system under ``u = -K_y y + ref``.

    Process noise is ``w - B K v``; its covariance and cross-covariance with ``v``
    are propagated.
    """
    K = np.atleast_2d(np.asarray(K_y, dtype=float))
    BK = model.B @ K
    Acl = model.A - BK @ model.C
    Q = model.Q - model.S @ BK.T - BK @ model.S.T + BK @ model.R @ BK.T
    S = model.S - BK @ model.R
    Q = 0.5 * (Q + Q.T)
    return StateSpaceModel(Acl, model.B, model.C, Q, model.R, S)


# ---------------------------------------------------------------- excitation

# Feedback taps (1-based) of maximal-length Fibonacci LFSRs.
_LFSR_TAPS = {
    3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6), 8: (8, 6, 5, 4),
    9: (9, 5), 10: (10, 7), 11: (11, 9), 12: (12, 11, 10, 4), 13: (13, 12, 11, 8),
    14: (14, 13, 12, 2), 15: (15, 14), 16: (16, 15, 13, 4),
}


def mls(register: int = 10) -> np.ndarray:
    """One period (``2**register - 1`` samples) of a maximal-length 0/1 sequence."""
    try:
        taps = _LFSR_TAPS[register]
    except KeyError:
        raise ValueError(f"register length must be in {sorted(_LFSR_TAPS)}") from None
    state = [1] * register
    period = 2 ** register - 1
    out = np.empty(period, dtype=np.int8)
    for k in range(period):
        out[k] = state[-1]
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
    return out


def prbs(T: int, channels: int, amplitude: float = 1.0, seed: int | None = None,
         register: int = 10) -> np.ndarray:
    """Pseudo-random binary ±``amplitude`` excitation of shape ``(channels, T)``.

    Every channel is the same maximal-length sequence; channel ``c`` starts
    ``c * period // channels`` samples after a seeded random phase, so the
    channels stay uncorrelated over lags shorter than that spacing. Sequences
    longer than one period wrap around.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    base = 2.0 * mls(register) - 1.0
    period = base.size
    rng = np.random.default_rng(seed)
    shifts = int(rng.integers(0, period)) + (np.arange(channels) * period) // max(channels, 1)
    idx = (np.arange(T)[None, :] + shifts[:, None]) % period
    return amplitude * base[idx]


def zoh_discretize(Ac, Bc, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    n = Ac.shape[0]
    Bc = np.asarray(Bc, dtype=float).reshape(n, -1)
    m = Bc.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = expm(aug * dt)
    return E[:n, :n], E[:n, n:]


def steady_state(model: StateSpaceModel, u_bar, K_y=None) -> np.ndarray:
    """Equilibrium state for constant input (optionally under ``u = -K y + u_bar``)."""
    A = model.A
    if K_y is not None:
        A = A - model.B @ np.asarray(K_y, dtype=float) @ model.C
    rhs = model.B @ np.asarray(u_bar, dtype=float).reshape(-1)
    return np.linalg.solve(np.eye(model.n) - A, rhs)


def warn_if_unstable(model: StateSpaceModel) -> None:
    if not model.is_stable():
        warnings.warn(f"model is not Schur stable (rho={spectral_radius(model.A):.3f})")
