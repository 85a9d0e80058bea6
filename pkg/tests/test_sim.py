import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import solve_discrete_lyapunov

from ddfdie import sim, systems
from ddfdie.sim import FaultScenario, IoDataset, ModelError, StateSpaceModel, Step, Sinusoid


def _stable_model(seed, n=3, m=2, l=2, noise=0.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= 0.8 / max(abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((l, n))
    return StateSpaceModel(A, B, C, noise * np.eye(n), noise * np.eye(l))


def test_zero_input_zero_output():
    d, X = sim.simulate(systems.nonminimum_phase(), np.zeros((2, 50)), noise_on=False)
    assert not d.Y.any() and not X.any()


def test_impulse_response_matches_markov():
    model = systems.minimum_phase()
    for ch in range(model.m):
        U = np.zeros((model.m, 25))
        U[ch, 0] = 1.0
        d, _ = sim.simulate(model, U, noise_on=False)
        H = model.markov(20)
        # y(k) = C A^(k-1) B e_ch for k >= 1
        np.testing.assert_allclose(d.Y[:, 1:22].T, H[:, :, ch], atol=1e-12)


def test_noise_has_requested_variance():
    model = systems.nonminimum_phase()
    d, _ = sim.simulate(model, np.zeros((2, 20000)), seed=3)
    # with no input the output is driven by w and v only
    P = solve_discrete_lyapunov(model.A, model.Q)
    expected = np.diag(model.C @ P @ model.C.T + model.R)
    np.testing.assert_allclose(np.var(d.Y, axis=1), expected, rtol=0.1)


def test_bad_covariance_rejected():
    with pytest.raises(ModelError):
        StateSpaceModel(np.eye(2) * 0.5, np.ones((2, 1)), np.ones((1, 2)), Q=-np.eye(2))
    with pytest.raises(ModelError):
        StateSpaceModel(np.eye(2) * 0.5, np.ones((2, 1)), np.ones((1, 2)), Q=np.array([[1, 0.5], [0, 1]]))


def test_dimension_mismatch():
    with pytest.raises(ModelError):
        sim.simulate(systems.nonminimum_phase(), np.zeros((3, 10)))


@given(seed=st.integers(0, 2**31 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_linearity(seed, a, b):
    model = _stable_model(seed % 1000)
    rng = np.random.default_rng(seed)
    u1, u2 = rng.standard_normal((2, 2, 40))
    y1 = sim.simulate(model, u1, noise_on=False)[0].Y
    y2 = sim.simulate(model, u2, noise_on=False)[0].Y
    y = sim.simulate(model, a * u1 + b * u2, noise_on=False)[0].Y
    np.testing.assert_allclose(y, a * y1 + b * y2, atol=1e-9 * (1 + np.abs(y).max()))


@given(seed=st.integers(0, 2**31 - 1))
def test_seeded_runs_reproducible(seed):
    model = systems.minimum_phase()
    U = sim.prbs(60, 2, 1.0, seed=seed)
    a, _ = sim.simulate(model, U, seed=seed)
    b, _ = sim.simulate(model, U, seed=seed)
    np.testing.assert_array_equal(a.Y, b.Y)


@given(seed=st.integers(0, 2**31 - 1), onset=st.integers(0, 50))
def test_zero_severity_fault_is_healthy(seed, onset):
    model = systems.nonminimum_phase()
    U = sim.prbs(60, 2, 1.0, seed=seed)
    faults = FaultScenario(actuator=(Step(onset, 0.0), None), sensor=(None, Sinusoid(onset, 0.0, 0.3)))
    a, _ = sim.simulate(model, U, faults, seed=seed)
    b, _ = sim.simulate(model, U, seed=seed)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_faults_enter_as_modelled():
    model = systems.nonminimum_phase()
    U = np.zeros((2, 30))
    faults = FaultScenario(actuator=(Step(5, 2.0),), sensor=(None, Step(10, -1.0)))
    d, _ = sim.simulate(model, U, faults, noise_on=False)
    ref, _ = sim.simulate(model, np.vstack([np.where(np.arange(30) >= 5, 2.0, 0.0), np.zeros(30)]),
                          noise_on=False)
    expected = ref.Y.copy()
    expected[1, 10:] -= 1.0
    np.testing.assert_allclose(d.Y, expected, atol=1e-14)


def test_fault_scenario_roundtrip():
    f = FaultScenario(actuator=(Step(3, 1.5), Sinusoid(7, 2.0, 0.1)), sensor=(None,))
    assert FaultScenario.from_dict(f.to_dict()) == f
    assert f.onset() == 3 and not f.is_healthy


# ------------------------------------------------------------ PRBS

def test_prbs_values_and_determinism():
    a = sim.prbs(500, 2, 1.0, seed=9)
    assert set(np.unique(a)) == {-1.0, 1.0}
    np.testing.assert_array_equal(a, sim.prbs(500, 2, 1.0, seed=9))
    assert np.all(np.abs(sim.prbs(50, 1, 2.5, seed=1)) == 2.5)


def test_prbs_autocorrelation():
    amp = 2.0
    x = amp * (2.0 * sim.mls(10) - 1.0)
    L = x.size
    for lag in (0, 1, 5, 100):
        r = np.mean(x * np.roll(x, lag))
        expected = amp ** 2 if lag == 0 else -amp ** 2 / L
        assert r == pytest.approx(expected, abs=1e-12)


def test_prbs_persistently_exciting():
    U = sim.prbs(1000, 2, 1.0, seed=0)
    i = 8
    H = np.vstack([U[:, a:a + 1000 - 2 * i] for a in range(2 * i)])
    assert np.linalg.matrix_rank(H) == H.shape[0]


# ------------------------------------------------------------ discretization / closed loop

def test_zoh_trivial():
    A, B = sim.zoh_discretize(np.zeros((2, 2)), np.ones((2, 1)), 0.5)
    np.testing.assert_allclose(A, np.eye(2))
    np.testing.assert_allclose(B, 0.5 * np.ones((2, 1)))
    A, _ = sim.zoh_discretize([[-0.7]], [[1.0]], 0.3)
    assert A[0, 0] == pytest.approx(np.exp(-0.21))


def test_zoh_vtol_matches_fine_integration():
    dt = systems.VTOL_DT
    A, B = sim.zoh_discretize(systems.VTOL_AC, systems.VTOL_BC, dt)
    u = np.array([1.0, -0.5])
    x_d = np.zeros(4)
    x_c = np.zeros(4)
    h = dt / 100
    # the open-loop plant is unstable, so compare over a short horizon
    for _ in range(4):
        x_d = A @ x_d + B @ u
        for _ in range(100):
            # midpoint rule keeps the fine-step error far below the tolerance
            k1 = systems.VTOL_AC @ x_c + systems.VTOL_BC @ u
            k2 = systems.VTOL_AC @ (x_c + 0.5 * h * k1) + systems.VTOL_BC @ u
            x_c = x_c + h * k2
    np.testing.assert_allclose(x_d, x_c, atol=1e-3)


def test_closed_loop_zero_gain_equals_open_loop():
    model = systems.nonminimum_phase()
    U = sim.prbs(80, 2, 1.0, seed=2)
    a = sim.closed_loop_sim(model, np.zeros((2, 2)), U, seed=5)
    b, _ = sim.simulate(model, U, seed=5)
    np.testing.assert_allclose(a.Y, b.Y, atol=1e-12)


def test_vtol_loop_bounded_and_steady_state():
    plant = systems.vtol_open_loop()
    K = systems.VTOL_KY
    d = sim.closed_loop_sim(plant, K, sim.prbs(1000, 2, 5.0, seed=0), seed=1)
    assert np.all(np.isfinite(d.Y)) and np.abs(d.Y).max() < 1e4
    ref = np.full((2, 400), 15.0)
    d = sim.closed_loop_sim(plant, K, ref, noise_on=False)
    x_bar = sim.steady_state(plant, [15.0, 15.0], K)
    A_cl = plant.A - plant.B @ K @ plant.C
    np.testing.assert_allclose((np.eye(4) - A_cl) @ x_bar, plant.B @ [15.0, 15.0], atol=1e-9)
    np.testing.assert_allclose(d.Y[:, -1], plant.C @ x_bar, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(d.meta["u_applied"], -K @ d.Y + ref)


def test_unstable_loop_refused():
    plant = systems.vtol_open_loop()
    with pytest.raises(sim.UnstableLoopError, match="spectral radius"):
        sim.closed_loop_sim(plant, np.zeros((2, 4)), np.zeros((2, 10)))


def test_dataset_csv_roundtrip(tmp_path):
    d, _ = sim.simulate(systems.minimum_phase(), sim.prbs(30, 2, 1.0, seed=0), seed=0)
    d.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "k,u1,u2,y1,y2"
    e = IoDataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(e.U, d.U)
    np.testing.assert_array_equal(e.Y, d.Y)


def test_example_systems():
    assert systems.nonminimum_phase().is_stable()
    assert systems.minimum_phase().is_stable()
    assert systems.vtol_closed_loop().is_stable()
    assert not systems.vtol_open_loop().is_stable()
    for s in (systems.nonminimum_phase(), systems.minimum_phase(), systems.vtol_open_loop()):
        assert s.is_observable()
