import numpy as np
import pytest

from regime_mdp.cli import main, read_csv

REFERENCE = """
x0 = [0.0]
y0 = 1
T = 1.0
output_dir = "out"

[model]
name = "two-state-constant"

[model.params]
q12 = 1.0
q21 = 2.0
b1 = 1.0
b2 = -2.0
sigma = 0.0

[simulate]
eps = 0.02
seed = 1
h_exponent = 0.3

[rate]
path_file = "out/path.csv"

[mc]
eps_grid = [0.08, 0.04]
a = 1.0
n_paths = 5000
seed = 3
"""


@pytest.fixture
def config(tmp_path):
    def make(text=REFERENCE, name="exp.toml"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return make


def run(*args):
    return main(list(args))


def header_line(path):
    with open(path) as fh:
        return fh.readline()


def test_analyze_reference(config, tmp_path):
    assert run("analyze", "--config", config()) == 0
    header, data = read_csv(tmp_path / "out" / "analyze.csv")
    assert header[:4] == ["t", "xbar_1", "mu_1", "mu_2"]
    assert data.shape[0] == 11
    np.testing.assert_allclose(data[:, 2], 2 / 3, atol=1e-15)
    np.testing.assert_allclose(data[:, 3], 1 / 3, atol=1e-15)
    np.testing.assert_allclose(data[:, header.index("lambda_1_1")], 4 / 3, atol=1e-12)


def test_analyze_constant_drift_has_zero_phi(config, tmp_path):
    assert run("analyze", "--config", config(REFERENCE.replace("b2 = -2.0", "b2 = 1.0"))) == 0
    header, data = read_csv(tmp_path / "out" / "analyze.csv")
    phi_cols = [k for k, h in enumerate(header) if h.startswith("phi_")]
    assert phi_cols and not np.any(data[:, phi_cols])


def test_analyze_is_byte_identical_on_rerun(config, tmp_path):
    cfg = config()
    run("analyze", "--config", cfg)
    first = (tmp_path / "out" / "analyze.csv").read_bytes()
    run("analyze", "--config", cfg)
    assert (tmp_path / "out" / "analyze.csv").read_bytes() == first


def test_every_csv_has_hash_and_seed(config, tmp_path):
    cfg = config()
    for cmd in ("analyze", "simulate", "rate", "validate"):
        assert run(cmd, "--config", cfg) == 0
    for f in (tmp_path / "out").glob("*.csv"):
        line = header_line(f)
        assert line.startswith("# config_sha256=") and " seed=" in line
        assert len(line.split()[1].split("=")[1]) == 64


def test_simulate_seeds_change_data_not_schema(config, tmp_path):
    cfg = config()
    run("simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "a"))
    run("simulate", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "b"))
    ha, da = read_csv(tmp_path / "a" / "path.csv")
    hb, db = read_csv(tmp_path / "b" / "path.csv")
    assert ha == hb == ["t", "x_1", "y", "eta_1"]
    assert not np.array_equal(da, db)
    assert "seed=2" in header_line(tmp_path / "b" / "path.csv")
    assert read_csv(tmp_path / "a" / "jumps.csv")[0] == ["t", "from", "to"]


def test_simulate_output_round_trips_into_rate(config, tmp_path):
    cfg = config()
    assert run("simulate", "--config", cfg) == 0
    assert run("rate", "--config", cfg) == 0
    header, value = read_csv(tmp_path / "out" / "rate_value.csv")
    assert header == ["value", "first_infeasible_t", "n_knots"]
    assert np.isfinite(value[0, 0]) and value[0, 0] > 0
    header, per_knot = read_csv(tmp_path / "out" / "rate.csv")
    assert header == ["t", "v_1", "cost", "feasible", "u_1_1", "u_2_1", "c_1_2", "c_2_1"]


def test_rate_of_zero_path_is_zero(config, tmp_path):
    eta = tmp_path / "zero.csv"
    t = np.linspace(0, 1, 101)
    eta.write_text("t,eta_1\n" + "".join(f"{v:.17g},0\n" for v in t))
    assert run("rate", "--config", config(REFERENCE.replace("out/path.csv", "zero.csv"))) == 0
    _, value = read_csv(tmp_path / "out" / "rate_value.csv")
    assert value[0, 0] == 0.0


def test_rate_of_straight_line(config, tmp_path):
    eta = tmp_path / "line.csv"
    t = np.linspace(0, 1, 101)
    eta.write_text("t,eta_1\n" + "".join(f"{v:.17g},{v:.17g}\n" for v in t))
    assert run("rate", "--config", config(REFERENCE.replace("out/path.csv", "line.csv"))) == 0
    _, value = read_csv(tmp_path / "out" / "rate_value.csv")
    assert value[0, 0] == pytest.approx(0.375, rel=1e-9)


def test_mc_reference_target(config, tmp_path):
    assert run("mc", "--config", config()) == 0
    header, data = read_csv(tmp_path / "out" / "mc.csv")
    assert header == ["eps", "h_eps", "a", "n_paths", "p_hat", "std_err", "decay_rate", "target_rate"]
    assert data[-1, -1] == pytest.approx(0.375, rel=1e-6)
    np.testing.assert_allclose(data[:, 0], [0.08, 0.04])


def test_mc_without_target(config, tmp_path):
    text = REFERENCE.replace("seed = 3", "seed = 3\nevent = \"sup\"")
    assert run("mc", "--config", config(text)) == 0
    with open(tmp_path / "out" / "mc.csv") as fh:
        last = fh.read().strip().splitlines()[-1]
    assert last.endswith(",")


def test_validate_reports(config, tmp_path):
    assert run("validate", "--config", config()) == 0
    header, _ = read_csv_text(tmp_path / "out" / "validate.csv")
    assert header == ["quantity", "value"]


def read_csv_text(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def test_validate_rows(config, tmp_path):
    run("validate", "--config", config())
    _, rows = read_csv_text(tmp_path / "out" / "validate.csv")
    values = dict(rows)
    assert values["irreducible_everywhere"] == "1"
    assert float(values["min_invariant_mass"]) == pytest.approx(1 / 3)


def test_exit_codes(config, tmp_path, capsys):
    assert run("mc", "--config", config("bogus = 1\n" + REFERENCE, "bad.toml")) == 2
    assert "bad.toml:1" in capsys.readouterr().err
    assert run("mc", "--config", str(tmp_path / "missing.toml")) == 4
    assert run("rate", "--config", config(REFERENCE.replace("out/path.csv", "nothing.csv"))) == 2
    no_authority = REFERENCE.replace("b2 = -2.0", "b2 = 1.0")
    assert run("mc", "--config", config(no_authority)) == 3
    assert run("mc", "--config", config(), "--workers", "-1") == 2


def test_out_dir_not_writable(config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("analyze", "--config", config(), "--out", str(blocker / "sub")) == 4


def test_workers_do_not_change_outputs(config, tmp_path):
    cfg = config()
    for w in ("1", "8"):
        assert run("mc", "--config", cfg, "--workers", w, "--out", str(tmp_path / w)) == 0
    assert (tmp_path / "1" / "mc.csv").read_bytes() == (tmp_path / "8" / "mc.csv").read_bytes()
