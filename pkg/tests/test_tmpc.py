import numpy as np
import pytest

from tubecert import ctrl
from tubecert import netmodel as nm
from tubecert import setcalc as sc
from tubecert import tmpc
from tubecert.tubes import Tube

from .oracles import qp_dual_projected_gradient


@pytest.fixture(scope="module")
def trucks():
    return nm.builtin_scenarios()["trucks-case1"]


@pytest.fixture(scope="module")
def controllers(trucks):
    return tmpc.build_controllers(trucks, N=10)


def test_tighten_trivial_and_interval():
    X, U = sc.box([-2], [2]), sc.box([-1], [1])
    Xh, Uh = tmpc.tighten(X, U, sc.point([0.0]), [[1.0]])
    np.testing.assert_allclose(Xh.b, X.b)
    np.testing.assert_allclose(Uh.b, U.b)
    Xh, Uh = tmpc.tighten(X, U, sc.box([-0.5], [0.5]), [[-1.0]])
    np.testing.assert_allclose(Xh.b, [1.5, 1.5])
    np.testing.assert_allclose(Uh.b, [0.5, 0.5])
    with pytest.raises(tmpc.TubeInadmissibleError):
        tmpc.tighten(X, U, sc.box([-3], [3]), [[0.0]])


def test_tightened_truck_set_nonempty(controllers):
    Xh = controllers[0].spec.Xh
    assert not Xh.is_empty
    assert Xh.point_margin(np.zeros(2)) > 0


def test_terminal_set_scalar_and_loose():
    X, U = sc.box([-1], [1]), sc.box([-1], [1])
    T = tmpc.terminal_set([[0.5]], [[1.0]], [[0.0]], X, U)
    assert T.certified
    np.testing.assert_allclose(sorted(T.set.b), [1, 1])
    big = sc.box([-1e6, -1e6], [1e6, 1e6])
    T = tmpc.terminal_set(np.diag([0.5, 0.2]), np.eye(2), np.zeros((2, 2)), big, big)
    assert T.certified and T.iterations == 1
    np.testing.assert_allclose(T.set.support_many(np.vstack([np.eye(2), -np.eye(2)])), 1e6)


def test_terminal_set_rejects_unstable():
    X = sc.box([-1], [1])
    with pytest.raises(ValueError):
        tmpc.terminal_set([[1.2]], [[1.0]], [[0.0]], X, X)


def test_truck_terminal_sets_are_invariant(controllers):
    for c in controllers:
        F = c.spec.A + c.spec.B @ c.spec.Kf
        Xf = c.spec.Xf.set
        assert c.spec.Xf.certified
        assert sc.contains(Xf, sc.linear_map(F, Xf), -1e-8).margin >= -1e-8
        assert sc.contains(c.spec.Xh, Xf, -1e-8).margin >= -1e-8
        assert sc.contains(c.spec.Uh, sc.linear_map(c.spec.Kf, Xf), -1e-8).margin >= -1e-8


def test_ocp_at_origin(controllers):
    for c in controllers:
        sol = tmpc.solve_ocp(np.zeros(c.n), c)
        assert sol.ok
        assert sol.value == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(sol.xhat0, 0, atol=1e-12)
        np.testing.assert_allclose(sol.uhat, 0, atol=1e-12)


def _scalar_spec(delta, N=1):
    P = ctrl.dlqr(1.0, 1.0, 1.0, 1.0).P
    big = sc.box([-100.0], [100.0])
    Z = sc.box([-delta], [delta])
    K = np.array([[-0.5]])
    tube = Tube(np.array([[0.5]]), Z, Z, 1, 0.0, 1e-3, 0.0, 0, K)
    Xf = tmpc.TerminalSet(big, 1, True)
    return tmpc.OcpSpec(0, N, np.eye(1), np.eye(1), np.eye(1), np.eye(1), P, K, K, tube,
                        sc.hrep(Z), big, big, Xf), float(P[0, 0])


def test_ocp_horizon_one_closed_form(kernel_backend):
    delta = 0.25
    spec, P = _scalar_spec(delta)
    ctl = tmpc.LocalTubeMpc(spec)
    for x in (-3.0, -0.1, 0.0, 0.2, 1.0, 4.0):
        sol = ctl.solve([x])
        # x^ is the point of [x - delta, x + delta] nearest the origin
        xh = np.sign(x) * max(abs(x) - delta, 0.0)
        u = -P * xh / (1 + P)
        assert sol.xhat0[0] == pytest.approx(xh, abs=1e-12)
        assert sol.uhat[0, 0] == pytest.approx(u, abs=1e-12)
        assert sol.value == pytest.approx(xh * xh + u * u + P * (xh + u) ** 2, abs=1e-12)


def test_ocp_against_dual_oracle(controllers, rng):
    c = controllers[1]
    hits = 0
    while hits < 5:
        x = rng.uniform([-2, -8], [2, 8])
        sol = c.solve(x)
        if not sol.ok:
            continue
        b = c._b_free.copy()
        b[: c._ntube] = c._hz - c._Hz @ x
        _, val = qp_dual_projected_gradient(c.H, np.zeros(len(c.H)), c.A_free, b, tol=1e-13)
        assert sol.value == pytest.approx(val, abs=1e-7 * (1 + abs(val)))
        assert sol.kkt <= 1e-8
        hits += 1


def test_ocp_fixed_nominal_matches_free_at_optimum(controllers, rng):
    c = controllers[2]
    x = np.array([0.3, -1.0])
    free = c.solve(x)
    fixed = c.solve(x, xhat0=free.xhat0)
    np.testing.assert_allclose(fixed.uhat, free.uhat, atol=1e-8)
    assert fixed.value == pytest.approx(free.value, abs=1e-9)


def test_control_policy():
    np.testing.assert_allclose(tmpc.control_policy([1.0, 2.0], [1.0, 2.0], [0.3], [[1.0, 1.0]]), [0.3])
    np.testing.assert_allclose(tmpc.control_policy([0.2], [0.0], [0.0], [[-1.5]]), [-0.3])


@pytest.mark.parametrize("mode", tmpc.MODES)
def test_zero_state_stays_zero(trucks, controllers, mode):
    x0 = [np.zeros(2)] * 4
    tr = tmpc.simulate(trucks, mode, x0, 8, controllers if mode != "linear" else None)
    assert tr.steps == 8 and tr.halted is None
    assert all(np.all(v == 0) for row in tr.x for v in row)
    assert tr.all_flags()


def test_linear_mode_stays_admissible(trucks, rng):
    for seed in range(5):
        r = np.random.default_rng(seed)
        x0 = tmpc.sample_initial_state(trucks, "linear", r)
        tr = tmpc.simulate(trucks, "linear", x0, 40)
        assert tr.all_flags()


def test_tmpc_run_keeps_everything_inside(trucks, controllers):
    rng = np.random.default_rng(7)
    for mode in ("tmpc", "tmpc-propagate"):
        x0 = tmpc.sample_initial_state(trucks, mode, rng, controllers)
        tr = tmpc.simulate(trucks, mode, x0, 30, controllers)
        assert tr.all_flags()
        # realized coupling lies in the disturbance set
        for i in range(4):
            W, _ = nm.disturbance_set(trucks, i)
            D = sc.direction_fan(2, 32)
            hW = W.support_many(D)
            for wt in tr.w:
                assert np.all(D @ wt[i] <= hW + 1e-9)


def test_example1_linear_growth():
    net = nm.builtin_scenarios()["example1"]
    x0 = [np.array([0.01]), np.array([0.01])]
    tr = tmpc.simulate(net, "linear", x0, 20)
    norms = [np.linalg.norm(np.concatenate(r)) for r in tr.x]
    assert norms[-1] == pytest.approx(norms[0] * 1.25 ** 20, rel=1e-9)
    assert not tr.all_flags()


def test_sim_trace_outputs(trucks, controllers):
    tr = tmpc.simulate(trucks, "tmpc", [np.array([0.1, 0.0])] * 4, 3, controllers)
    csv_text = tr.to_csv()
    lines = csv_text.splitlines()
    assert lines[0].startswith("t,i,x0,x1,u0")
    assert len(lines) == 1 + 4 * 4
    s = tr.summary()
    assert s["steps"] == 3 and s["all_in_tube"]
    assert tr.summary_json() == tmpc.simulate(trucks, "tmpc", [np.array([0.1, 0.0])] * 4, 3,
                                              controllers).summary_json()


def test_simulate_validates_arguments(trucks):
    with pytest.raises(ValueError):
        tmpc.simulate(trucks, "mpc", [np.zeros(2)] * 4, 3)
    with pytest.raises(ValueError):
        tmpc.simulate(trucks, "tmpc", [np.zeros(2)] * 4, 3)
    with pytest.raises(ValueError):
        tmpc.simulate(trucks, "linear", [np.zeros(2)] * 3, 3)
    with pytest.raises(ValueError):
        tmpc.simulate(trucks, "linear", [np.zeros(2)] * 4, 0)


def test_parallel_simulation_matches_serial(trucks, controllers):
    x0 = [np.array([0.2, -0.5]), np.array([-0.1, 0.3]), np.zeros(2), np.array([0.05, 0.0])]
    a = tmpc.simulate(trucks, "tmpc", x0, 10, controllers).to_csv()
    b = tmpc.simulate(trucks, "tmpc", x0, 10, controllers, workers=4).to_csv()
    assert a == b


def test_build_controllers_rejects_large_blocks():
    rng = np.random.default_rng(0)
    n = 4
    s = nm.Subsystem(0, 0.5 * np.eye(n), rng.normal(size=(n, 1)), sc.box(-np.ones(n), np.ones(n)),
                     sc.box([-1], [1]))
    with pytest.raises(ValueError):
        tmpc.build_controllers(nm.Network((s,), gains=(np.zeros((1, n)),)))
