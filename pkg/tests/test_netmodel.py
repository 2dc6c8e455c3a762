import json

import numpy as np
import pytest

from tubecert import ctrl
from tubecert import netmodel as nm
from tubecert import setcalc as sc


@pytest.fixture(scope="module")
def scenarios():
    return nm.builtin_scenarios()


def test_example1_global(scenarios):
    g = nm.assemble_global(scenarios["example1"])
    np.testing.assert_array_equal(g.A, np.eye(2))
    np.testing.assert_array_equal(g.B, [[1, 0.5], [0.5, 1]])


def test_single_subsystem_global_equals_local():
    s = nm.Subsystem(0, [[0.9, 0.1], [0, 0.8]], [[0], [1]], sc.box([-1, -1], [1, 1]), sc.box([-1], [1]))
    g = nm.assemble_global(nm.Network((s,)))
    np.testing.assert_array_equal(g.A, s.A)
    np.testing.assert_array_equal(g.B, s.B)


def test_decoupled_spectrum(rng):
    subs = [nm.Subsystem(i, rng.normal(size=(2, 2)), rng.normal(size=(2, 1)),
                         sc.box([-1, -1], [1, 1]), sc.box([-1], [1])) for i in range(2)]
    net = nm.Network(tuple(subs))
    g = nm.assemble_global(net)
    assert np.all(g.A[:2, 2:] == 0) and np.all(g.B[:2, 1:] == 0)
    K = [rng.normal(size=(1, 2)) for _ in range(2)]
    F = g.A + g.B @ net.block_gain(K)
    local = max(ctrl.spectral_radius(s.A + s.B @ k) for s, k in zip(subs, K))
    assert ctrl.spectral_radius(F) == pytest.approx(local, rel=1e-12)


def test_assemble_global_is_lossless(scenarios):
    net = scenarios["trucks-case1"]
    g = nm.assemble_global(net)
    xs, us = net.state_slices, net.input_slices
    for s in net.subsystems:
        np.testing.assert_array_equal(g.A[xs[s.index], xs[s.index]], s.A)
        for j, (Aij, Bij) in s.couplings.items():
            np.testing.assert_array_equal(g.A[xs[s.index], xs[j]], Aij)
            np.testing.assert_array_equal(g.B[xs[s.index], us[j]], Bij)


def test_neighbours_from_nonzero_blocks(scenarios):
    net = scenarios["trucks-case1"]
    assert [s.neighbours for s in net.subsystems] == [(1,), (0, 2), (1, 3), (2,)]


def test_disturbance_no_neighbours():
    s = nm.Subsystem(0, [[0.5]], [[1]], sc.box([-1], [1]), sc.box([-1], [1]))
    W, parts = nm.disturbance_set(nm.Network((s,)), 0)
    assert parts == {}
    assert W.is_singleton() and W.support([1]) == 0


def test_disturbance_interval_arithmetic():
    X, U = sc.box([-2], [2]), sc.box([-1], [1])
    s0 = nm.Subsystem(0, [[0.5]], [[1]], X, U, {1: ([[0.5]], [[1.0]])})
    s1 = nm.Subsystem(1, [[0.5]], [[1]], X, U)
    W, parts = nm.disturbance_set(nm.Network((s0, s1)), 0)
    assert parts[1].support([1]) == pytest.approx(2) and parts[1].support([-1]) == pytest.approx(2)


def test_disturbance_supports_sum(scenarios, rng):
    net = scenarios["trucks-case1"]
    D = rng.normal(size=(32, 2))
    for i in range(len(net)):
        W, parts = nm.disturbance_set(net, i)
        np.testing.assert_allclose(W.support_many(D), sum(P.support_many(D) for P in parts.values()), atol=1e-9)


def test_tripling_x2_triples_w1(scenarios, rng):
    W1, _ = nm.disturbance_set(scenarios["trucks-case1"], 0)
    W1n, _ = nm.disturbance_set(scenarios["trucks-case2"], 0)
    D = rng.normal(size=(20, 2))
    np.testing.assert_allclose(W1n.support_many(D), 3 * W1.support_many(D), atol=1e-12)


def test_truck_coupling_is_state_only(scenarios):
    for s in scenarios["trucks-case1"].subsystems:
        for Aij, Bij in s.couplings.values():
            assert np.all(Bij == 0)


def test_trucks_constraints(scenarios):
    for s in scenarios["trucks-case1"].subsystems:
        assert s.X.box_bounds[1].tolist() == [2, 8] and s.X.box_bounds[0].tolist() == [-2, -8]
        assert s.U.box_bounds[1].tolist() == [4]


def test_case3_spectral_radii(scenarios):
    net = scenarios["case3"]
    F11 = net[0].A + net[0].B @ net.gains[0]
    F22 = net[1].A + net[1].B @ net.gains[1]
    assert ctrl.spectral_radius(F11) == pytest.approx(0.140, abs=1e-3)
    assert ctrl.spectral_radius(F22) == pytest.approx(0.994, abs=1e-3)
    g = nm.assemble_global(net)
    assert ctrl.spectral_radius(g.A + g.B @ net.block_gain()) == pytest.approx(0.983, abs=1e-3)


def test_zero_springs_decouple():
    p = nm.TruckChainParams(springs=(0, 0, 0), dampers=(0, 0, 0))
    net = nm.truck_chain(p)
    for s in net.subsystems:
        assert s.couplings == {}
        np.testing.assert_allclose(s.A, [[1, 0.1], [0, 1]], atol=1e-15)


def test_continuous_force_balance():
    p = nm.DEFAULT_TRUCKS
    A = nm.truck_chain_continuous(p).A
    for i, mi in enumerate(p.masses):
        row = A[2 * i + 1]
        # spring terms sum to zero across positions, damper terms across velocities
        assert row[0::2].sum() == pytest.approx(0, abs=1e-14)
        assert row[1::2].sum() == pytest.approx(0, abs=1e-14)
    # explicit composition for truck 2: neighbours 1 and 3
    m2, (k12, k23), (c12, c23) = p.masses[1], p.springs[:2], p.dampers[:2]
    np.testing.assert_allclose(A[3, [0, 2, 4]], [k12 / m2, -(k12 + k23) / m2, k23 / m2])
    np.testing.assert_allclose(A[3, [1, 3, 5]], [c12 / m2, -(c12 + c23) / m2, c23 / m2])


def test_newton_third_law_symmetry():
    p = nm.TruckChainParams(masses=(2.0, 2.0), springs=(1.5,), dampers=(0.4,), state_scale=(1, 1))
    A = nm.truck_chain_continuous(p).A
    np.testing.assert_array_equal(A[0:2, 2:4], A[2:4, 0:2])
    net = nm.truck_chain(p)
    np.testing.assert_allclose(net[0].couplings[1][0], net[1].couplings[0][0], atol=1e-14)


def test_global_discretization_option():
    net = nm.truck_chain(nm.TruckChainParams(discretization="global"))
    g = nm.assemble_global(net)
    full = ctrl.zoh_discretize(nm.truck_chain_continuous(nm.DEFAULT_TRUCKS), 0.1)
    np.testing.assert_allclose(g.A, full.A, atol=1e-14)


def test_bad_networks_rejected():
    X, U = sc.box([-1], [1]), sc.box([-1], [1])
    with pytest.raises(nm.ScenarioError):
        nm.Subsystem(0, [[1]], [[1]], X, U, {0: ([[1]], [[0]])})
    with pytest.raises(nm.ScenarioError):
        nm.Subsystem(0, [[1, 0], [0, 1]], [[1], [0]], X, U)
    s0 = nm.Subsystem(0, [[1]], [[1]], X, U, {3: ([[1]], [[0]])})
    with pytest.raises(nm.ScenarioError):
        nm.Network((s0,))
    with pytest.raises(nm.ScenarioError):
        nm.TruckChainParams(masses=(1, -1), springs=(1,), dampers=(1,), state_scale=(1, 1))


def test_scenario_json_round_trip(tmp_path):
    doc = {
        "name": "pair",
        "subsystems": [
            {"A": [[0.9]], "B": [[1.0]], "couplings": {"1": {"A": [[0.1]], "B": [[0.0]]}},
             "X": {"A": [[1], [-1]], "b": [2, 2]}, "U": {"A": [[1], [-1]], "b": [1, 1]}},
            {"A": [[0.8]], "B": [[1.0]], "couplings": {"0": {"A": [[0.2]], "B": [[0.0]]}},
             "X": {"A": [[1], [-1]], "b": [2, 2]}, "U": {"A": [[1], [-1]], "b": [1, 1]}},
        ],
        "gains": [[[-0.5]], [[-0.4]]],
    }
    path = tmp_path / "pair.json"
    path.write_text(json.dumps(doc))
    net = nm.load_scenario(path)
    assert net.name == "pair" and len(net) == 2
    assert net[0].couplings[1][0][0, 0] == 0.1
    np.testing.assert_array_equal(net.gains[1], [[-0.4]])


def test_truck_scenario_json(tmp_path):
    doc = {"truck_chain": {"masses": [3, 2, 3, 6], "springs": [7.5, 0.75, 1], "dampers": [4, 0.25, 0.3], "Ts": 0.1},
           "lqr": {"Q_diag": [1, 1], "R_diag": [1]}}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    net = nm.load_scenario(path)
    ref = nm.builtin_scenarios()["trucks-case1"]
    np.testing.assert_array_equal(nm.assemble_global(net).A, nm.assemble_global(ref).A)
    assert net.gains is None
    assert len(nm.lqr_gains(net)) == 4


def test_scenario_errors(tmp_path):
    with pytest.raises(nm.ScenarioError):
        nm.load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(nm.ScenarioError):
        nm.load_scenario(bad)
    with pytest.raises(nm.ScenarioError):
        nm.scenario_from_dict({"foo": 1})
    # origin outside X
    doc = {"subsystems": [{"A": [[1]], "B": [[1]], "X": {"A": [[1], [-1]], "b": [2, -1]},
                           "U": {"A": [[1], [-1]], "b": [1, 1]}}]}
    with pytest.raises(nm.ScenarioError):
        nm.scenario_from_dict(doc)
