import numpy as np
import pytest

from fbspectral import cli
from fbspectral.semigroup import apply_semigroup, helmholtz_project
from fbspectral.spectral_core import PhysicalParams, load_field, make_grid, random_field, save_field


def _ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(tmp_path, *argv):
    return cli.main(["--out", str(tmp_path / "out"), *argv])


SMALL = """
[grid]
n = 8
[solver]
n_time = 8
t_end = 0.25
"""


def test_picard_zero_data(tmp_path, capsys):
    cfg = _ini(tmp_path, SMALL + "[data]\namplitude = 0\n")
    assert _run(tmp_path, "picard", "--config", cfg) == cli.EXIT_OK
    text = (tmp_path / "out" / "picard.csv").read_text()
    assert "# converged = 1" in text
    assert "picard: 1 iterations" in capsys.readouterr().out


def test_picard_output_is_deterministic(tmp_path):
    cfg = _ini(tmp_path, SMALL + "[data]\namplitude = 1e-2\n")
    assert _run(tmp_path, "picard", "--config", cfg) == 0
    first = (tmp_path / "out" / "picard.csv").read_bytes()
    assert _run(tmp_path, "picard", "--config", cfg) == 0
    assert (tmp_path / "out" / "picard.csv").read_bytes() == first
    assert b"# run.seed = 0" in first and b"# data.amplitude = 1e-2" in first


@pytest.mark.parametrize("text", ["[physics]\nnu = x\n", "[nonsense]\na = 1\n", "[grid]\nsize = 3\n",
                                  "[grid]\nn = 7\n", "[data]\nband = 1\n"])
def test_bad_config_exits_2(tmp_path, capsys, text):
    assert _run(tmp_path, "picard", "--config", _ini(tmp_path, text)) == cli.EXIT_USAGE
    assert capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert _run(tmp_path, "norms", "--field", str(tmp_path / "none.fbsf"), "--s", "0") == cli.EXIT_USAGE


def test_inflate_with_infeasible_window_exits_3(tmp_path):
    cfg = _ini(tmp_path, "[inflate]\nm_values = 3\nt_window = 0.001 1\nquad_order_eta = 2\n"
                         "quad_points_xi = 2\nn_times = 2\n")
    assert _run(tmp_path, "inflate", "--config", cfg) == cli.EXIT_INFEASIBLE
    text = (tmp_path / "out" / "inflation.csv").read_text()
    assert "outside admissible" in text and "# verdict = FAIL" in text


def test_inflate_small_run(tmp_path):
    cfg = _ini(tmp_path, "[inflate]\nm_values = 3 4\nquad_order_eta = 4\nquad_points_xi = 3\nn_times = 3\n")
    code = _run(tmp_path, "inflate", "--config", cfg)
    assert code in (cli.EXIT_OK, cli.EXIT_FAILED)
    lines = [l for l in (tmp_path / "out" / "inflation_times.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert len(lines) == 1 + 2 * 3


def test_matrices(capsys):
    assert cli.main(["matrices", "--xi", "1", "2", "3"]) == 0
    out = capsys.readouterr().out
    assert "M1 =" in out and "M3 =" in out and "fallback" not in out
    assert cli.main(["matrices", "--xi", "1", "0", "0", "--n-big", "0"]) == 0
    assert "fallback" in capsys.readouterr().out


def test_norms_and_evolve_round_trip(tmp_path):
    grid = make_grid(8, 1.0)
    u = helmholtz_project(random_field(grid, np.random.default_rng(0)))
    src = tmp_path / "u.fbsf"
    save_field(u, src)
    assert _run(tmp_path, "norms", "--field", str(src), "--s", "0.5") == 0
    assert "fb_norm" in (tmp_path / "out" / "norms.csv").read_text()
    cfg = _ini(tmp_path, "[physics]\nnu = 0.5\nomega = 2\nn_big = 3\n")
    assert _run(tmp_path, "evolve", "--v0", str(src), "--t", "0.3", "--config", cfg) == 0
    out = load_field(tmp_path / "out" / "evolved.fbsf")
    expect = apply_semigroup(u, 0.3, PhysicalParams.from_n(0.5, 2, 3))
    assert np.array_equal(out.data, expect.data)
    assert _run(tmp_path, "evolve", "--v0", str(src), "--t", "-1") == cli.EXIT_USAGE


def test_product_law_command(tmp_path):
    assert _run(tmp_path, "product-law", "--trials", "1", "--n", "8") == 0
    rows = (tmp_path / "out" / "product_law.csv").read_text().splitlines()
    assert sum(not r.startswith("#") for r in rows) == 1 + 8
    assert _run(tmp_path, "product-law", "--trials", "0") == cli.EXIT_USAGE


def test_smoothing_command(tmp_path):
    cfg = _ini(tmp_path, "[grid]\nn = 8\n[smoothing]\nn_samples = 60\n")
    assert _run(tmp_path, "smoothing", "--config", cfg) == 0
    assert "exponent.smoothing.+" in (tmp_path / "out" / "smoothing.csv").read_text()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    cfg = _ini(tmp_path, SMALL + "[data]\namplitude = 0\n")
    assert cli.main(["picard", "--config", cfg]) == 0
    assert (tmp_path / "env" / "picard.csv").exists()
