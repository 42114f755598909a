import csv
import io

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from hhomg.bench import (
    ConfigError,
    ExperimentConfig,
    ResultRow,
    export_system,
    main,
    reproduce_tables,
    rows_to_csv,
    rows_to_markdown,
    run_experiment,
)
from hhomg.discrete import DiscreteHierarchy
from hhomg.multigrid import solve


def test_config_validation():
    ExperimentConfig()  # defaults are valid and reproduce the square / I3 / V(1,1) table
    for bad in (
        dict(domain="disk"),
        dict(p=0),
        dict(levels=1),
        dict(injection="i4"),
        dict(cycle="w"),
        dict(tol=0.0),
        dict(max_iter=0),
        dict(fmt="xml"),
        dict(domain="cube", levels=6),
    ):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)


def test_cube_guard_message():
    with pytest.raises(ConfigError, match="memory"):
        ExperimentConfig(domain="cube", levels=7)


def test_run_experiment_rows():
    rows = run_experiment(ExperimentConfig("square", 1, 3, "i3", "v22"))
    assert [r.level for r in rows] == [3]
    assert rows[0].dofs == 6016
    assert rows[0].iterations is not None and rows[0].iterations < 100
    two = run_experiment(ExperimentConfig("square", 1, 2, "i3", "v22"))
    assert [r.level for r in two] == [2]


def test_csv_and_markdown_output():
    rows = [
        ResultRow("square", 1, "i3", "v11", 3, 6016, 21),
        ResultRow("square", 1, "i1", "v11", 3, 6016, None),
    ]
    parsed = list(csv.reader(io.StringIO(rows_to_csv(rows))))
    assert parsed[0] == ["domain", "p", "injection", "cycle", "level", "dofs", "iterations"]
    assert parsed[1] == ["square", "1", "i3", "v11", "3", "6016", "21"]
    assert parsed[2][-1] == "inf"
    md = rows_to_markdown(rows).splitlines()
    assert md[0].startswith("| domain") and md[1].startswith("|---")
    assert md[3].endswith("| inf |")


def test_export_round_trip(tmp_path):
    cfg = ExperimentConfig("square", 1, 2, "i3", "v22")
    hier = DiscreteHierarchy.for_domain("square", 1, 2)
    mtx, rhs = export_system(cfg, 2, tmp_path / "sys", hier)
    A = sp.csr_matrix(scipy.io.mmread(str(mtx)))
    b = np.loadtxt(rhs)
    system = hier.system(1)
    assert abs(A - A.T).max() == 0
    assert abs(A - system.A).max() <= 1e-14 * abs(system.A).max()
    np.testing.assert_array_equal(b, system.b)
    lines = mtx.read_text().splitlines()
    assert lines[0].startswith("%%MatrixMarket matrix coordinate real symmetric")
    body = [ln for ln in lines if not ln.startswith("%")]
    assert len(body) == 1 + sp.triu(system.A).nnz
    assert len(rhs.read_text().splitlines()) == system.size
    # the re-read system solves in the same number of iterations
    mg_mem = hier.multigrid("i3", "v22")
    mg_file = type(mg_mem)([hier.system(0).A, A], [hier.transfer(0, "i3")], mg_mem.cycle)
    assert solve(mg_file, b).iterations == solve(mg_mem, system.b).iterations
    with pytest.raises(ConfigError):
        export_system(cfg, 3, tmp_path / "bad", hier)


def test_reproduce_tables():
    assert reproduce_tables([]) == ""
    with pytest.raises(ConfigError):
        reproduce_tables([10])
    doc = reproduce_tables([1, 8], max_level=3)
    assert "| p=1 | 6016 |" in doc and "| p=2 | 9024 |" in doc and "| p=3 | 12032 |" in doc
    assert "| p=1 | 17280 |" in doc and "| p=2 | 34560 |" in doc


def test_cli_csv(capsys):
    assert main(["--domain", "square", "--p", "1", "--levels", "3", "--cycle", "v22"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "domain,p,injection,cycle,level,dofs,iterations"
    assert out[1].startswith("square,1,i3,v22,3,6016,")


def test_cli_deterministic(capsys):
    args = ["--domain", "lshape", "--p", "1", "--levels", "3", "--injection", "i2", "--format", "md"]
    main(args)
    first = capsys.readouterr().out
    main(args)
    assert capsys.readouterr().out == first


def test_cli_errors(capsys):
    assert main(["--p", "0", "--levels", "3"]) == 2
    assert "polynomial degree" in capsys.readouterr().err
    assert main(["--domain", "cube", "--levels", "6"]) == 2
    assert main(["--table", "11"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["--injection", "i7"])
    assert exc.value.code != 0


def test_cli_export_and_verify(tmp_path, capsys):
    prefix = tmp_path / "out"
    assert main(["--p", "1", "--levels", "2", "--export", str(prefix)]) == 0
    assert (tmp_path / "out.mtx").exists() and (tmp_path / "out.rhs").exists()
    capsys.readouterr()
    assert main(["--verify", "--p", "1", "--levels", "2", "--format", "md"]) == 0
    assert "overall: PASS" in capsys.readouterr().out
