import csv
import subprocess
import sys

import numpy as np
import pytest

from polyrelax.cli import main
from polyrelax.exact import enumerate_vertices, same_point_sets
from polyrelax.network import Activation, Affine, Network, evaluate, random_network, save_network
from polyrelax.polytope import HPoly, format_hpoly, parse_hpoly, read_hpoly, read_vpoly

from conftest import K_A, K_B, OCTAHEDRON_A, OCTAHEDRON_B


@pytest.fixture
def octa_file(tmp_path):
    p = tmp_path / "octa.txt"
    p.write_text(format_hpoly(HPoly(OCTAHEDRON_A, OCTAHEDRON_B)))
    return p


def diamond_files(tmp_path):
    net = Network((
        Affine([[1.0, 1.0], [1.0, -1.0]], [0.0, 0.0]),
        Activation("relu"),
        Affine([[-1.0, -1.0], [0.0, 0.0]], [2.5, 0.0]),
    ))
    save_network(tmp_path / "net.json", net)
    (tmp_path / "data.csv").write_text("0,0.0,0.0\n")
    return str(tmp_path / "net.json"), str(tmp_path / "data.csv")


def read_report(path):
    with open(path / "report.csv") as fh:
        return list(csv.DictReader(fh))


def test_sblm_reproduces_two_neuron_example(octa_file, tmp_path):
    out = tmp_path / "k.txt"
    assert main(["sblm", str(octa_file), "-o", str(out)]) == 0
    K = read_hpoly(out)
    assert same_point_sets(enumerate_vertices(K), enumerate_vertices(HPoly(K_A, K_B)))


def test_sblm_other_activations(octa_file, tmp_path, capsys):
    for act in ("tanh", "sigmoid", "maxpool"):
        assert main(["sblm", str(octa_file), "--activation", act, "--order", "0" if act == "maxpool" else "1,0"]) == 0
        K = parse_hpoly(capsys.readouterr().out)
        assert K.dim == (3 if act == "maxpool" else 4)


def test_hull_of_polytope_with_itself(octa_file, tmp_path):
    out, verts = tmp_path / "h.txt", tmp_path / "v.txt"
    assert main(["hull", str(octa_file), str(octa_file), "-o", str(out), "--vertices", str(verts)]) == 0
    H = read_hpoly(out)
    assert same_point_sets(enumerate_vertices(H), enumerate_vertices(HPoly(OCTAHEDRON_A, OCTAHEDRON_B)))
    assert same_point_sets(read_vpoly(verts).vertices, enumerate_vertices(H))


def test_hull_of_two_squares(tmp_path):
    sq = HPoly([[1, 0], [-1, 0], [0, 1], [0, -1]], [0, -1, 0, -1])
    shifted = HPoly(sq.a, sq.b + sq.a @ np.array([3.0, 0.0]))
    (tmp_path / "a.txt").write_text(format_hpoly(sq))
    (tmp_path / "b.txt").write_text(format_hpoly(shifted))
    assert main(["hull", str(tmp_path / "a.txt"), str(tmp_path / "b.txt"), "-o", str(tmp_path / "h.txt"),
                 "--remove-redundant"]) == 0
    H = read_hpoly(tmp_path / "h.txt")
    assert H.m == 4
    assert same_point_sets(enumerate_vertices(H), [[0, 0], [4, 0], [0, 1], [4, 1]])


def test_malformed_polytope_file(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 >= x\n")
    assert main(["hull", str(bad), str(bad)]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["sblm", str(tmp_path / "missing.txt")]) == 2


def test_missing_epsilon_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["certify", "--network", "n.json", "--dataset", "d.csv"])
    assert err.value.code == 2


def test_config_errors_exit_2(tmp_path):
    net, data = diamond_files(tmp_path)
    assert main(["certify", "--network", net, "--dataset", data, "--epsilon", "-1"]) == 2
    assert main(["certify", "--network", net, "--dataset", data, "--epsilon", "0.1", "--k", "1"]) == 2
    assert main(["certify", "--network", str(tmp_path / "none.json"), "--dataset", data, "--epsilon", "0.1"]) == 2


def test_certify_epsilon_zero_counts_clean_accuracy(tmp_path, rng, capsys):
    net = random_network(rng, [2, 4, 3])
    X = rng.normal(size=(3, 2))
    preds = np.argmax(evaluate(net, X), axis=1)
    labels = [preds[0], (preds[1] + 1) % 3, preds[2]]
    save_network(tmp_path / "net.json", net)
    (tmp_path / "d.csv").write_text("".join(f"{y},{float(a)!r},{float(b)!r}\n" for y, (a, b) in zip(labels, X)))
    code = main(["certify", "--network", str(tmp_path / "net.json"), "--dataset", str(tmp_path / "d.csv"),
                 "--epsilon", "0", "--output-dir", str(tmp_path)])
    assert code == 0
    rows = read_report(tmp_path)
    assert [r["verdict"] for r in rows] == ["verified", "falsified", "verified"]
    assert capsys.readouterr().out.strip().startswith("verified 2 / falsified 1 / unknown 0")
    assert (tmp_path / "report.txt").read_text().count("\n") == 5


def test_no_multi_neuron_changes_verdict(tmp_path):
    net, data = diamond_files(tmp_path)
    base = ["certify", "--network", net, "--dataset", data, "--epsilon", "1.0"]
    assert main(base + ["--output-dir", str(tmp_path / "multi")]) == 0
    assert main(base + ["--no-multi-neuron", "--output-dir", str(tmp_path / "single")]) == 0
    assert read_report(tmp_path / "multi")[0]["verdict"] == "verified"
    assert read_report(tmp_path / "single")[0]["verdict"] == "unknown"


def test_fail_on_falsify(tmp_path):
    net, data = diamond_files(tmp_path)
    args = ["certify", "--network", net, "--dataset", data, "--epsilon", "1.5", "--output-dir", str(tmp_path)]
    assert main(args) == 0
    assert main(args + ["--fail-on-falsify"]) == 1


def test_certify_jobs_is_deterministic(tmp_path, rng):
    net = random_network(rng, [2, 6, 3])
    save_network(tmp_path / "net.json", net)
    X = rng.normal(size=(4, 2))
    preds = np.argmax(evaluate(net, X), axis=1)
    (tmp_path / "d.csv").write_text("".join(f"{y},{float(a)!r},{float(b)!r}\n" for y, (a, b) in zip(preds, X)))
    base = ["certify", "--network", str(tmp_path / "net.json"), "--dataset", str(tmp_path / "d.csv"),
            "--epsilon", "0.2", "--refine", "--refine-octahedron"]
    assert main(base + ["--output-dir", str(tmp_path / "a")]) == 0
    assert main(base + ["--jobs", "2", "--output-dir", str(tmp_path / "b")]) == 0
    a, b = read_report(tmp_path / "a"), read_report(tmp_path / "b")
    assert [(r["verdict"], r["margins"]) for r in a] == [(r["verdict"], r["margins"]) for r in b]


def test_bounds_command(tmp_path):
    net, data = diamond_files(tmp_path)
    out = tmp_path / "b.txt"
    assert main(["bounds", "--network", net, "--dataset", data, "--epsilon", "1", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# layer 0 (input)"
    assert lines[1] == "-1.0 1.0"
    assert "# layer 2 (relu)" in lines
    assert main(["bounds", "--network", net, "--dataset", data, "--epsilon", "1", "--sample", "3"]) == 2


def test_module_entry_point(octa_file):
    out = subprocess.run([sys.executable, "-m", "polyrelax", "sblm", str(octa_file)], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("#") or ">=" in out.stdout
