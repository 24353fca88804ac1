import csv
import io
import subprocess
import sys

import pytest

from ogpm.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_curves(capsys):
    code, out, _ = run(["curves", "--mechanisms", "ogpm,pm-c", "--epsilon", "1,2", "--grid", "5"],
                       capsys)
    assert code == 0
    r = rows(out)
    assert r[0] == ["mechanism", "epsilon", "metric", "x", "err"] and len(r) == 21


def test_worst_case(capsys):
    code, out, _ = run(["worst-case", "--mechanisms", "ogpm,staircase", "--epsilon", "1"], capsys)
    assert code == 0
    assert float(rows(out)[1][3]) == pytest.approx(0.37754, abs=1e-5)


def test_worst_case_staircase_l2_is_config_error(capsys):
    code, _, err = run(["worst-case", "--mechanisms", "staircase", "--metric", "l2"], capsys)
    assert code == 2 and "error" in err


def test_solve(capsys):
    code, out, err = run(["solve", "--epsilon", "1"], capsys)
    assert code == 0 and "converged=True" in err
    assert max(float(r[1]) for r in rows(out)[1:]) == pytest.approx(1.64872, abs=1e-4)


def test_solve_place_at(capsys):
    code, out, _ = run(["solve", "--epsilon", "1", "--place-at", "0.5"], capsys)
    assert code == 0 and len(rows(out)) >= 4


def test_verify(capsys, tmp_path):
    out = tmp_path / "v.txt"
    assert main(["verify-m", "--samples", "2", "--out", str(out)]) == 0
    assert out.read_text().startswith("PASS m=3")
    assert main(["verify-m", "--m", "1", "--samples", "2", "--eps-range", "1", "5"]) == 1


def test_fit_from_file(capsys, tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("epsilon,value\n" + "".join(f"{e},{2.718281828 ** (e / 2)}\n"
                                                for e in (0.5, 1, 2, 3, 5)))
    code, out, _ = run(["fit", "--input", str(p)], capsys)
    assert code == 0 and float(rows(out)[1][1]) == pytest.approx(0.5, abs=1e-6)


def test_estimate(capsys, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("mechanisms=ogpm\nepsilons=2\ntrials=2\nn=200\n")
    code, out, _ = run(["estimate", "--config", str(cfg), "--seed", "4"], capsys)
    r = rows(out)
    assert code == 0 and len(r) == 3 and r[1][-1] == "4"


def test_polar(capsys):
    code, out, err = run(["polar-split", "--epsilon-total", "7.283185307179586", "--grid", "11"],
                         capsys)
    assert code == 0 and "eps1=1.29" in err and len(rows(out)) == 12


def test_sample(capsys, tmp_path):
    code, out, _ = run(["sample", "--values", "0,0.5,0.99", "--epsilon", "2"], capsys)
    assert code == 0 and len(rows(out)) == 4
    p = tmp_path / "in.csv"
    p.write_text("value\n1.0\n6.0\n")
    code, out, _ = run(["sample", "--input", str(p), "--domain", "circle"], capsys)
    assert code == 0 and all(0 <= float(r[1]) < 6.2832 for r in rows(out)[1:])


@pytest.mark.parametrize("argv,code", [
    (["curves", "--mechanisms", "nope"], 2),
    (["curves", "--epsilon", "-1"], 2),
    (["curves", "--metric", "huber"], 2),
    (["sample", "--values", "1.5"], 2),
    (["sample"], 2),
    (["sample", "--input", "/nonexistent/x.csv"], 3),
    (["estimate", "--config", "/nonexistent/c.txt"], 3),
    (["curves", "--out", "/nonexistent/dir/o.csv"], 3),
])
def test_exit_codes(argv, code, capsys):
    assert run(argv, capsys)[0] == code


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ogpm", "curves", "--grid", "3"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and len(res.stdout.splitlines()) == 4
    res = subprocess.run([sys.executable, "-m", "ogpm", "curves", "--mechanisms", "x"],
                         capture_output=True, text=True)
    assert res.returncode == 2
