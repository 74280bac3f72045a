import numpy as np
import pytest

from fracham import expr as ex
from fracham.config import ConfigError, load_config, parse_config
from fracham.fracops import FracOrder
from fracham.grid import UniformGrid
from fracham.io import atomic_write, report_to_csv, trajectory_from_csv, trajectory_to_csv
from fracham.model import Trajectory
from fracham.report import ResidualReport
from fracham.grid import GridFn

MINIMAL = """\
[problem]
N = 1
lagrangian = 0.5*v1^2 - 0.5*q1^2

[orders]
alpha1 = 0.5
beta1 = 0.5
gamma1 = 0.5

[grid]
a = 0
b = 1
n = 256

[boundary]
qa = 0
qb = 0.8
"""


def test_minimal_oscillator_config_loads(tmp_path):
    path = tmp_path / "osc.ini"
    path.write_text(MINIMAL)
    cfg = load_config(path)
    assert cfg.n_coords == 1
    assert cfg.orders == (FracOrder(0.5, 0.5, 0.5),)
    assert cfg.grid == UniformGrid(0.0, 1.0, 256)
    assert cfg.boundary.qa == (0.0,) and cfg.boundary.qb == (0.8,)
    assert cfg.lagrangian.body == ex.parse("0.5*v1^2 - 0.5*q1^2", 1)
    assert cfg.method == "direct" and cfg.solver.seed == 0
    assert ex.to_string(cfg.require_hamiltonian().body) == "0.5*p1^2 + 0.5*q1^2"


def test_gamma_out_of_range_cites_line():
    text = MINIMAL.replace("gamma1 = 0.5", "gamma1 = 1.5")
    with pytest.raises(ConfigError, match=r"gamma must lie in \[0, 1\]") as info:
        parse_config(text, "osc.ini")
    assert "osc.ini:6" in str(info.value)


def test_orders_longer_than_n():
    text = MINIMAL.replace("gamma1 = 0.5", "gamma1 = 0.5\nalpha2 = 0.5\nbeta2 = 0.5\ngamma2 = 0.5")
    with pytest.raises(ConfigError, match="N = 1"):
        parse_config(text)


def test_missing_key_reports_section_line():
    text = MINIMAL.replace("n = 256\n", "")
    with pytest.raises(ConfigError, match=r"x\.ini:10: missing key 'n'"):
        parse_config(text, "x.ini")


def test_missing_section():
    text = MINIMAL.replace("[grid]", "[output]")
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_key_and_bad_number():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL.replace("n = 256", "n = 256\nwidth = 3"))
    with pytest.raises(ConfigError, match=r":13: n = 'many'"):
        parse_config(MINIMAL.replace("n = 256", "n = many"))


def test_expression_error_cites_line():
    with pytest.raises(ConfigError, match=r":3: lagrangian:.*out of range"):
        parse_config(MINIMAL.replace("q1^2\n", "q3^2\n"))
    with pytest.raises(ConfigError, match=r":3: lagrangian"):
        parse_config(MINIMAL.replace("q1^2\n", "q1^^2\n"))


def test_needs_lagrangian_or_hamiltonian():
    text = MINIMAL.replace("lagrangian = 0.5*v1^2 - 0.5*q1^2\n", "")
    with pytest.raises(ConfigError, match="at least one"):
        parse_config(text)


def test_cross_validation_of_hamiltonian():
    ok = MINIMAL.replace("[orders]", "hamiltonian = 0.5*q1^2 + 0.5*p1^2\n\n[orders]")
    assert parse_config(ok).hamiltonian is not None
    bad = MINIMAL.replace("[orders]", "hamiltonian = 0.5*p1^2\n\n[orders]")
    with pytest.raises(ConfigError, match="disagrees"):
        parse_config(bad)
    nonquad = MINIMAL.replace("0.5*v1^2 - 0.5*q1^2", "exp(v1)").replace(
        "[orders]", "hamiltonian = 0.5*p1^2\n\n[orders]"
    )
    with pytest.raises(ConfigError, match="not quadratic"):
        parse_config(nonquad)


def test_boundary_length_must_match():
    with pytest.raises(ConfigError, match="expected N = 1"):
        parse_config(MINIMAL.replace("qb = 0.8", "qb = 0.8, 1"))


def test_seed_environment_override():
    cfg = parse_config(MINIMAL + "\n[solver]\nseed = 4\n", environ={"FRACVAR_SEED": "11"})
    assert cfg.solver.seed == 11
    assert "FRACVAR_SEED" in cfg.echo
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, environ={"FRACVAR_SEED": "x"})


def test_command_line_overrides_win():
    cfg = parse_config(MINIMAL, overrides=["grid.n=32", "grid.n=64", "problem.lagrangian=0.5*v1^2"])
    assert cfg.grid.n == 64
    assert cfg.lagrangian.body == ex.parse("0.5*v1^2", 1)
    assert "command-line override grid.n = 64" in cfg.echo
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, overrides=["nodot=3"])


def test_solver_section():
    cfg = parse_config(
        MINIMAL
        + "\n[solver]\nmethod = canonical\nmax_iterations = 20\ninitial_guess = sin(t)\nrestarts = 2\n"
    )
    assert cfg.method == "canonical"
    assert cfg.solver.max_iterations == 20 and cfg.solver.restarts == 2
    assert cfg.solver.initial_guess == ex.parse("sin(t)", 1)
    with pytest.raises(ConfigError, match="only use t"):
        parse_config(MINIMAL + "\n[solver]\ninitial_guess = q1\n")
    with pytest.raises(ConfigError, match="method"):
        parse_config(MINIMAL + "\n[solver]\nmethod = shooting\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


# ---------------------------------------------------------------------------
# CSV and atomic writes


def _traj(with_p=True):
    g = UniformGrid(0.0, 1.0, 16)
    o = (FracOrder(0.5, 0.5, 0.5), FracOrder(0.3, 0.6, 0.2))
    q = np.vstack([np.sin(g.nodes) / 3, np.exp(g.nodes) * 1e-7])
    p = np.vstack([np.cos(g.nodes) / 7, -g.nodes / 3]) if with_p else None
    return Trajectory(g, q, o, p)


@pytest.mark.parametrize("with_p", [True, False])
def test_trajectory_csv_roundtrip_is_bit_exact(with_p):
    traj = _traj(with_p)
    text = trajectory_to_csv(traj)
    header = text.splitlines()[0]
    assert header == ("t,q1,q2,p1,p2" if with_p else "t,q1,q2")
    back = trajectory_from_csv(text, traj.orders, traj.grid)
    assert back == traj
    assert trajectory_from_csv(text, traj.orders) == traj


def test_trajectory_csv_errors():
    traj = _traj()
    text = trajectory_to_csv(traj)
    with pytest.raises(ValueError, match="header"):
        trajectory_from_csv(text.replace("t,q1", "time,q1", 1), traj.orders)
    lines = text.splitlines()
    lines[3], lines[4] = lines[4], lines[3]
    with pytest.raises(ValueError, match="increasing"):
        trajectory_from_csv("\n".join(lines), traj.orders)
    with pytest.raises(ValueError, match="grid"):
        trajectory_from_csv(text, traj.orders, UniformGrid(0.0, 1.0, 8))
    with pytest.raises(ValueError, match="malformed"):
        trajectory_from_csv(text.replace(lines[2].split(",")[1], "abc", 1), traj.orders)


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "out.csv"
    atomic_write(target, "a\n")
    atomic_write(target, "b\n")
    assert target.read_text() == "b\n"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.csv"]


def test_report_csv_layout():
    g = UniformGrid(0.0, 1.0, 8)
    r = GridFn(g, np.linspace(0, 1, 9), np.r_[False, np.ones(8, bool)])
    text = report_to_csv(ResidualReport.build({"EL1": r}, 0.5))
    head, summary = text.split("\n\n")
    rows = head.splitlines()
    assert rows[0] == "t,EL1" and rows[1] == "0,"
    assert summary.splitlines()[0] == "equation,sup_norm,rms,included_nodes,pass"
    assert summary.splitlines()[1].startswith("EL1,") and summary.splitlines()[1].endswith(",5,0")
