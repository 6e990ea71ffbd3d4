import numpy as np
import pytest

from moment_ensemble import io
from moment_ensemble.grid import EnsembleProfile, ParameterGrid
from moment_ensemble.moments import MomentSequence


def test_moments_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = MomentSequence(2, 3, rng.normal(size=(10, 2)))
    path = io.write_moments_csv(m, tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "k_1,k_2,state_i,value"
    assert lines[1].startswith("0,0,1,") and lines[2].startswith("0,0,2,")
    back = io.read_moments_csv(path)
    np.testing.assert_array_equal(back.values, m.values)
    assert (back.dim_param, back.max_order) == (2, 3)


def test_read_moments_rejects_bad_files(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("k_1,state_i,value\n0,1,1.0\n2,1,0.5\n")
    with pytest.raises(io.CSVFormatError, match="dense"):
        io.read_moments_csv(p)
    p.write_text("k_1,state_i,value\n0,1,1.0\n1,1,abc\n")
    with pytest.raises(io.CSVFormatError, match="line 3"):
        io.read_moments_csv(p)
    p.write_text("a,b\n")
    with pytest.raises(io.CSVFormatError, match="header"):
        io.read_moments_csv(p)


def test_load_profile_infers_unit_box(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("beta_1,x_1\n0.25,1\n0.5,1\n0.75,1\n")
    grid, prof = io.load_profile_csv(p)
    assert grid.bounds == [(0.0, 1.0)]
    np.testing.assert_allclose(grid.weights, 1 / 3)
    np.testing.assert_array_equal(prof.states[:, 0], 1.0)


def test_load_profile_errors(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("")
    with pytest.raises(io.CSVFormatError, match="empty"):
        io.load_profile_csv(p)
    p.write_text("beta_1,x_1\n0.25,1\n0.5,nan\n0.75,1\n")
    with pytest.raises(io.CSVFormatError, match="line 3.*x_1"):
        io.load_profile_csv(p)
    p.write_text("beta_1,x_1\n0.5,1\n0.25,1\n")
    with pytest.raises(io.CSVFormatError, match="increasing"):
        io.load_profile_csv(p)
    p.write_text("beta_1,x_1\n0.25,1\n0.5\n")
    with pytest.raises(io.CSVFormatError, match="line 3.*columns"):
        io.load_profile_csv(p)
    p.write_text("beta_1,x_1\n0.25,1,3\n")
    with pytest.raises(io.CSVFormatError, match="columns"):
        io.load_profile_csv(p)


def test_profile_round_trip_keeps_bounds(tmp_path):
    g = ParameterGrid.uniform([(0.9, 1.1)], 7)
    prof = EnsembleProfile.from_function(g, lambda b: [b[0], -b[0], 1.0])
    path = io.write_profile_csv(g, prof, tmp_path / "p.csv")
    g2, prof2 = io.load_profile_csv(path)
    np.testing.assert_array_equal(g2.nodes, g.nodes)
    np.testing.assert_allclose(g2.weights, g.weights, rtol=1e-15)
    np.testing.assert_array_equal(prof2.states, prof.states)


def test_trajectory_csv_layout(tmp_path):
    g = ParameterGrid.uniform([(0.0, 1.0)], 2)
    states = [np.zeros((2, 3)), np.ones((2, 3))]
    path = io.write_trajectory_csv([0.0, 0.5], states, [np.array([1.0, 2.0])] * 2, g,
                                   tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "time,node_index,beta_1,x_1,x_2,x_3,u_1,u_2"
    assert lines[3] == "0.5,0,0.25,1,1,1,1,2"
    assert len(lines) == 5


def test_fixed_precision_format():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert float(io.fmt(1 / 3)) == 1 / 3
