import json

import numpy as np
import pytest

import dualac


def chain2():
    # Two states, one action: s0 -> s1 with reward 0, s1 absorbing with reward 1.
    p = [np.array([[0.0, 1.0], [0.0, 1.0]])]
    return dualac.TabularMdp(p, np.array([[0.0], [1.0]]), 0.5, np.array([1.0, 0.0]))


def test_hand_values():
    v = dualac.value_iteration(chain2(), 1e-12)
    np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-9)


def test_lp_oracles_close_the_gap():
    mdp = dualac.env_mdp("gridworld")
    sol = dualac.solve_lp_oracles(mdp)
    assert abs(sol["primal"] - sol["dual"]) < 1e-8
    assert dualac.dual_feasibility_residual(mdp, sol["rho_star"]) < 1e-9
    assert abs(dualac.duality_gap(mdp, sol["v_star"], sol["rho_star"])) < 1e-8
    np.testing.assert_allclose(dualac.policy_evaluation(mdp, sol["pi_star"]), sol["v_star"], atol=1e-8)


def test_operators_fix_v_star():
    mdp = dualac.env_mdp("chain5")
    v = dualac.value_iteration(mdp, 1e-12)
    np.testing.assert_allclose(dualac.k_step_bellman(mdp, v, 3), v, atol=1e-9)
    np.testing.assert_allclose(dualac.lambda_bellman(mdp, v, 0.7, 200), v, atol=1e-9)


def test_invalid_mdp_raises():
    with pytest.raises(ValueError):
        dualac.TabularMdp([np.eye(2) * 0.7], np.zeros((2, 1)), 0.9, np.array([0.5, 0.5]))


def test_config_round_trip():
    cfg = dualac.normalize_config({"k": 3, "batch_m": 8})
    assert cfg["k"] == 3 and cfg["batch_m"] == 8
    assert set(dualac.default_config()) == set(cfg)
    with pytest.raises(ValueError):
        dualac.normalize_config({"no_such_field": 1})


def test_trainer_is_deterministic(tmp_path):
    cfg = {"batch_m": 4, "seed": 3}
    a = dualac.Trainer("chain5", cfg)
    b = dualac.Trainer("chain5", cfg)
    ra = [a.step() for _ in range(3)]
    rb = [b.step() for _ in range(3)]
    for x, y in zip(ra, rb):
        x.pop("wall_time"), y.pop("wall_time")
        assert x == y
    assert a.iteration == 3
    a.save(tmp_path / "ckpt.json")
    assert json.loads((tmp_path / "ckpt.json").read_text())


def test_run_experiment_writes_metrics(tmp_path):
    records = dualac.run_experiment("chain2", {"iterations": 4, "batch_m": 4}, str(tmp_path))
    assert [r["iteration"] for r in records] == [1, 2, 3, 4]
    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 4


def test_tabular_export_of_continuous_env_fails():
    with pytest.raises(NotImplementedError):
        dualac.env_mdp("pendulum")
