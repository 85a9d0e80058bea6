import numpy as np
import pytest
from hypothesis import given, strategies as st

from ddfdie import evaluation as ev
from ddfdie import ident, runtime, sim, synth, systems, tuning
from ddfdie.structmat import IndexSelection
from ddfdie.synth import FilterSpec
from ddfdie.tuning import TuningError

SENSOR2 = FilterSpec(2, IndexSelection(p=[2], l=2, m=2), "sensor_estimation")


def _record(seed=0, T=1000, noise=True):
    sc = ev.example2_scenario()
    if noise:
        return ev.identification_record(sc, seed)
    U = ev.build_record(sc.ident_input, 2, seed)
    return ev.simulate_system("example2", U, noise=False)


def _data_driven(spec, data):
    mk, M = ident.identify(data, spec.i, spec.design_sel)
    return synth.synthesize_data_driven(mk, M, spec)


def synthetic_problem(seed, n=3, nz=3, nu=2, N=400, rho=0.2):
    """Error trace generated by the error dynamics themselves (the forward oracle)."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= rho / max(abs(np.linalg.eigvals(A)))
    Bc = rng.standard_normal((n, nz))
    G1 = rng.standard_normal((n, nu))
    Z = rng.standard_normal((nz, N))
    U = rng.standard_normal((nu, N))
    x = np.zeros(n)
    E = np.empty((n, N))
    for t in range(N):
        E[:, t] = x + G1 @ U[:, t]
        x = A @ x + Bc @ Z[:, t]
    return A, Bc, G1, Z, U, E


# ------------------------------------------------------------ split / lambda

def test_split_ratio():
    d = _record()
    a, b = tuning.split_data(d, 0.7)
    assert (a.T, b.T) == (700, 300)
    np.testing.assert_array_equal(np.hstack([a.Y, b.Y]), d.Y)


def test_split_refusals():
    d = _record()
    with pytest.raises(ValueError, match="ratio"):
        tuning.split_data(d, 1.0)
    short = d.segment(0, 200)
    with pytest.raises(ValueError, match="lambda=120"):
        tuning.split_data(short, 0.5, lam=120)


def test_choose_lambda():
    assert tuning.choose_lambda(0.5 * np.eye(4)) == 20
    assert tuning.choose_lambda(np.diag([0.26, 0.44])) == 17
    N = np.diag(np.ones(3), 1)
    assert tuning.choose_lambda(N) <= 4
    with pytest.raises(TuningError):
        tuning.choose_lambda(1.1 * np.eye(2))
    with pytest.warns(UserWarning, match="capped"):
        assert tuning.choose_lambda(0.9 * np.eye(2), cap=5) == 5


# ------------------------------------------------------------ error traces

def test_exact_filter_error_trace_vanishes():
    f = synth.synthesize_exact(ev.true_model("example2", noise=False), SENSOR2)
    E = tuning.build_error_trace(f, _record(noise=False))
    assert np.abs(E[:, 50:]).max() < 1e-8


def test_error_traces_forget_initial_state():
    f = _data_driven(SENSOR2, _record(1))
    seg = _record(2).segment(700, 1000)
    a = tuning.build_error_trace(f, seg)
    b = tuning.build_error_trace(f, seg, eta0=np.full(f.n_eta, 5.0))
    gap = np.linalg.norm(a - b, axis=0)
    assert gap[-1] < 1e-10 * gap[0]


def test_untuned_error_visible():
    f = _data_driven(SENSOR2, _record(3).segment(0, 700))
    E = tuning.build_error_trace(f, _record(3).segment(700, 1000))
    assert np.abs(E).mean() > 0.05


# ------------------------------------------------------------ solver

@pytest.mark.parametrize("method", ["pinv", "structured"])
@given(seed=st.integers(0, 10_000))
def test_solver_recovers_synthetic(method, seed):
    A, Bc, G1, Z, U, E = synthetic_problem(seed)
    lam = tuning.choose_lambda(A, 1e-14)
    solve = tuning.solve_error_dynamics if method == "pinv" else tuning.solve_error_dynamics_structured
    B_hat, G_hat, _, rank_ok = solve(E, Z, U, A, lam)
    assert rank_ok
    truth = np.hstack([Bc, G1])
    assert np.linalg.norm(np.hstack([B_hat, G_hat]) - truth) < 1e-8 * np.linalg.norm(truth)


def test_solver_zero_trace():
    A, _, _, Z, U, _ = synthetic_problem(0)
    for solve in (tuning.solve_error_dynamics, tuning.solve_error_dynamics_structured):
        B_hat, G_hat, _, _ = solve(np.zeros((3, Z.shape[1])), Z, U, A, 10)
        assert np.abs(B_hat).max() < 1e-12 and np.abs(G_hat).max() < 1e-12


def test_solver_refusals():
    A, _, _, Z, U, E = synthetic_problem(0, N=30)
    for solve in (tuning.solve_error_dynamics, tuning.solve_error_dynamics_structured):
        with pytest.raises(TuningError, match="exceeds"):
            solve(E, Z, U, A, 40)
        with pytest.raises(TuningError, match="zero"):
            solve(E, np.zeros_like(Z), np.zeros_like(U), A, 5)


def test_stacked_powers_full_column_rank():
    for seed in range(20):
        A, *_ = synthetic_problem(seed, rho=0.9)
        stack = np.vstack([np.linalg.matrix_power(A, b) for b in range(5)])
        assert np.linalg.matrix_rank(stack) == A.shape[0]


def test_lagged_regressor_layout():
    Z = np.arange(12.0).reshape(2, 6)
    U = 100 + np.arange(6.0)[None, :]
    R = tuning.lagged_regressor(Z, U, 2)
    # column t-2: [Z(t-2); Z(t-1); U(t)]
    np.testing.assert_array_equal(R[:, 0], [0, 6, 1, 7, 102])
    assert R.shape == (5, 4)


# ------------------------------------------------------------ tuned filters

def test_sensor_constraint_columns_zero():
    d = _record(4)
    first, second = tuning.split_data(d)
    f = _data_driven(SENSOR2, first)
    est = tuning.identify_error_dynamics(f, second)
    nb = f.B_r.shape[1]
    suspect = [nb + c for c, r in enumerate(f.y_rows) if r in SENSOR2.sel.block_rows("p", 2, True)]
    assert suspect and not est.B_hat[:, suspect].any()


def test_zero_estimate_gives_base_filter():
    d = _record(5)
    first, second = tuning.split_data(d)
    f = _data_driven(SENSOR2, first)
    est = tuning.identify_error_dynamics(f, second)
    zero = tuning.ErrorDynamicsEstimate(np.zeros_like(est.B_hat), np.zeros_like(est.G1_hat), est.lam,
                                        0.0, True, est.base_filter_id, est.kind)
    tuned = tuning.tune_filter(f, zero)
    np.testing.assert_array_equal(runtime.estimate_fault(tuned, second).f_hat,
                                  runtime.estimate_fault(f, second).f_hat)
    assert tuned.base_filter_id == f.spec.label()


def test_tune_filter_dimension_check():
    d = _record(6)
    f = _data_driven(SENSOR2, d)
    bad = tuning.ErrorDynamicsEstimate(np.zeros((2, 2)), np.zeros((2, 2)), 5, 0.0, True)
    with pytest.raises(ValueError, match="does not fit"):
        tuning.tune_filter(f, bad)
    with pytest.raises(ValueError):
        tuning.tune(synth.synthesize_exact(systems.nonminimum_phase(),
                                           FilterSpec(2, IndexSelection(l=2, m=2))), d)


def test_lambda_plus_settle_refused():
    d = _record(7)
    first, second = tuning.split_data(d)
    f = _data_driven(SENSOR2, first)
    with pytest.raises(TuningError, match="settle"):
        tuning.identify_error_dynamics(f, second, lam=20, settle=280)
    # an automatic lambda is capped to fit, with a warning
    with pytest.warns(UserWarning, match="capped"):
        tuning.identify_error_dynamics(f, second, settle=290)


def test_example2_tuning_reduces_bias():
    sc = ev.example2_scenario()
    e = ev.monte_carlo(sc, 10, time_filter=False).errors
    assert np.median(np.abs(e["tuned"][:, 0])) / 2.0 < 0.05
    assert np.median(np.abs(e["untuned"][:, 0])) / 2.0 > 0.1


@pytest.mark.parametrize("kind", ["sensor", "actuator"])
@pytest.mark.parametrize("inp", ["u1", "u2"])
def test_tuning_never_hurts(kind, inp):
    rep = ev.monte_carlo(ev.sweep_scenario(kind, inp), 50, time_filter=False)
    untuned = np.abs(rep.errors["untuned"]).mean(axis=0)
    tuned = np.abs(rep.errors["tuned"]).mean(axis=0)
    assert np.all(tuned <= untuned)


@pytest.mark.xfail(strict=True, reason="printed single-run matrices are not reproducible entry by entry; "
                                       "identified corrections are about 0.03 in size against printed 0.17")
def test_printed_error_dynamics():
    printed_B = np.array([
        [-0.07, -0.03, 0.07, 0.14, 0.02, 0, 0, 0],
        [0.01, -0.16, 0.03, 0.09, -0.01, 0, 0.02, 0],
        [np.nan, np.nan, np.nan, np.nan, -0.01, 0, 0.08, 0],  # row 3 of B(:,1:4) is garbled in print
        [-0.04, -0.16, 0, 0, -0.02, 0, 0.17, 0],
    ])
    printed_G = np.zeros((4, 4))
    printed_G[2, :2] = [-0.05, -0.07]
    sc = ev.example2_scenario()
    f = ev.build_filters(sc, ev.identification_record(sc, 0))["tuned"]
    assert np.nanmax(np.abs(f.est.B_hat - printed_B)) <= 0.1
    assert np.abs(f.est.G1_hat - printed_G).max() <= 0.1


# ------------------------------------------------------------ error bound

def test_bound_zero_and_homogeneous():
    A = np.diag([0.3, 0.5])
    zero = tuning.ErrorDynamicsEstimate(np.zeros((2, 3)), np.zeros((2, 2)), 10, 0.0, True)
    assert tuning.predict_error_bound(zero, A, np.ones((5, 20))) == 0.0
    rng = np.random.default_rng(0)
    est = tuning.ErrorDynamicsEstimate(rng.standard_normal((2, 3)), rng.standard_normal((2, 2)), 10, 0.0, True)
    Zt = rng.standard_normal((5, 50))
    b1 = tuning.predict_error_bound(est, A, Zt)
    assert tuning.predict_error_bound(est, A, 2 * Zt) == pytest.approx(2 * b1)


def test_bound_dominates_observed_error():
    for seed in range(20):
        d = _record(seed)
        first, second = tuning.split_data(d)
        f = _data_driven(SENSOR2, first)
        est = tuning.identify_error_dynamics(f, second)
        tuned = tuning.tune_filter(f, est)
        healthy = _record(1000 + seed, noise=False).segment(700, 1000)
        # the error that the identified dynamics predict for this input, and its bound
        E = tuning.build_error_trace(f, healthy) - tuning.build_error_trace(tuned, healthy)
        bound = tuning.predict_error_bound(est, f.A_r, tuning.filter_input_trace(f, healthy))
        assert np.linalg.norm(E) <= bound * (1 + 1e-9)
