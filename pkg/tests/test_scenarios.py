import filecmp
import json

import numpy as np
import pytest

from moment_ensemble.scenarios import (
    PRESETS,
    ScenarioConfig,
    StallError,
    emit_csv,
    load_config,
    preset_config,
    run,
)


def bloch_v0_lower_bound(nodes):
    """Best terminal sup error over all y-rotations by a common angle theta.

    With v = 0 every node ends at (sin(beta theta), 0, cos(beta theta)), whose
    distance to (1, 0, 0) is sqrt(2 - 2 sin(beta theta)).
    """
    theta = np.linspace(1.2, 2.0, 80001)
    err = np.sqrt(np.maximum(2 - 2 * np.sin(np.outer(theta, nodes)), 0)).max(axis=1)
    return float(err.min())


@pytest.fixture(scope="module")
def bloch_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bloch")
    return run(preset_config("bloch-paper").replace(output_dir=str(out))), out


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_round_trip(name):
    cfg = preset_config(name)
    assert ScenarioConfig.parse(cfg.serialize()) == cfg


def test_config_overrides_merge(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("preset: bloch-paper\nname: short\nT: 0.5\ncontroller:\n  gain: 2.0\n")
    cfg = load_config(str(p))
    assert cfg.name == "short" and cfg.T == 0.5 and cfg.controller["gain"] == 2.0
    assert cfg.controller["weight"] == 0.5 and cfg.moment_order == 35


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown config keys"):
        ScenarioConfig.parse("preset: bloch-paper\nbogus: 1\n")
    with pytest.raises(ValueError, match="dt"):
        preset_config("bloch-paper").replace(dt=0.0)
    with pytest.raises(ValueError, match="degenerate"):
        preset_config("bloch-paper").replace(param_bounds=[[1.0, 1.0]])
    with pytest.raises(ValueError):
        ScenarioConfig.parse("name: x\n")
    with pytest.raises(ValueError, match="unknown preset"):
        load_config("no-such-preset")


def test_bloch_preset_descends_and_conserves_norm(bloch_run):
    res, _ = bloch_run
    assert res.max_V_increase <= 1e-8 * 1e-3
    assert res.extras["norm_drift"] < 1e-5
    assert res.V_trace[-1] < 1e-2 * res.V_trace[0]


def test_bloch_preset_meets_the_rotation_lower_bound(bloch_run):
    res, _ = bloch_run
    bound = bloch_v0_lower_bound(res.grid.nodes[:, 0])
    assert bound == pytest.approx(0.1564, abs=1e-4)
    assert res.final_sup_error >= bound - 1e-9


def test_bloch_preset_stalls_on_the_singular_set(bloch_run):
    # the target is unreachable with one rotation axis, so the feedback comes
    # to rest at a point where the damping product vanishes but the error does not
    res, _ = bloch_run
    assert res.extras["stall_time"] is not None
    assert res.extras["final_V"] > 1e-4
    cfg = preset_config("bloch-paper").replace(abort_on_stall=True)
    with pytest.raises(StallError):
        run(cfg)


def test_bloch_outputs(bloch_run):
    res, out = bloch_run
    names = {"trajectory.csv", "moments.csv", "controls.csv", "lyapunov.csv",
             "final_profile.csv", "manifest.json", "config.yaml"}
    assert names <= {p.name for p in out.iterdir()}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["files"]["lyapunov"] == "lyapunov.csv"
    assert manifest["summary"]["final_sup_error"] == res.final_sup_error
    assert (out / "trajectory.csv").read_text().startswith(
        "time,node_index,beta_1,x_1,x_2,x_3,u_1,u_2\n")
    assert (out / "moments.csv").read_text().startswith("time,k_1,state_i,value\n")


def test_emit_csv_returns_manifest(bloch_run, tmp_path):
    res, _ = bloch_run
    files = emit_csv(res, tmp_path / "again")
    assert set(files) == {"trajectory", "moments", "controls", "lyapunov", "final_profile",
                          "config", "manifest"}
    assert all(p.exists() for p in files.values())


def test_bloch_at_target_needs_no_control():
    cfg = preset_config("bloch-paper").replace(
        T=0.2, grid_points=50, initial_profile={"name": "constant", "value": [1.0, 0.0, 0.0]})
    res = run(cfg)
    assert all(np.all(u == 0) for u in res.traces.controls)
    np.testing.assert_array_equal(res.traces.ensemble_states[-1], res.traces.ensemble_states[0])
    assert res.final_sup_error == 0


def test_single_node_reaches_exact_rotation():
    res = run(preset_config("bloch-paper").replace(grid_points=1, T=8.0))
    assert res.grid.nodes[0, 0] == pytest.approx(1.0)
    assert res.final_sup_error < 1e-3


def test_bloch_output_is_bit_identical(tmp_path):
    base = preset_config("bloch-paper").replace(T=0.3, grid_points=40, moment_order=10)
    a, b = tmp_path / "a", tmp_path / "b"
    run(base.replace(output_dir=str(a)))
    run(base.replace(output_dir=str(b)))
    for name in ("trajectory.csv", "moments.csv", "controls.csv", "lyapunov.csv",
                 "manifest.json"):
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_nonlinear_uncontrolled_origin_stays_put():
    cfg = preset_config("nonlinear-paper").replace(
        T=1.0, grid_points=50, initial_profile={"name": "constant", "value": [0.0, 0.0]},
        controller={"coefficients": [0.0, 0.0]})
    res = run(cfg)
    assert all(u[0] == 0 for u in res.traces.controls)
    assert np.all(res.traces.ensemble_states[-1] == 0)


def test_nonlinear_short_run_commutes():
    res = run(preset_config("nonlinear-paper").replace(T=1.0, grid_points=100))
    assert res.extras["commuting_gap"] < 1e-10
    assert res.final_sup_error < res.extras["sup_error_trace"][0]


def test_nonlinear_gradient_damping_variant_runs():
    cfg = preset_config("nonlinear-paper").replace(
        T=0.5, grid_points=50, moment_order=10, controller={"kind": "gradient_damping"})
    res = run(cfg)
    assert np.isfinite(res.final_sup_error)


def test_output_moment_demo(tmp_path):
    rep = run(preset_config("output-moment-demo").replace(output_dir=str(tmp_path)))
    assert rep.radical_distance == 0
    np.testing.assert_allclose(rep.first.values[1:, 0], 0.5, atol=1e-3)
    assert abs(rep.l2_distance - 1) < 1e-2
    assert (tmp_path / "output_moments.csv").read_text().startswith("k_1,first,second\n")


def test_output_moment_demo_variants():
    same = run(preset_config("output-moment-demo").replace(
        target_profile={"name": "indicator", "interval": [0.0, 0.5]}))
    assert same.radical_distance == 0 and same.l2_distance == 0
    ones = run(preset_config("output-moment-demo").replace(
        target_profile={"name": "constant", "value": [1.0]}))
    assert ones.radical_distance == pytest.approx(0.5, abs=1e-3)
