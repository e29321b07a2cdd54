import json
from pathlib import Path
from xml.etree import ElementTree

import pytest

from qsc import cli, harness
from qsc.automata import make_combination_lock, write_pair

GOLDEN = Path(__file__).parent / "golden"
SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv("QSC_SEED", raising=False)
    monkeypatch.setenv("COLUMNS", "80")


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


LOCK_RUN = ("run", "--domain", "automata", "--case", "combination-lock", "--oracle", "teacher",
            "--policy", "always-train-test")


# --- help ------------------------------------------------------------------------

@pytest.mark.parametrize("sub", ["main", "run", "suite", "inspect", "plot"])
def test_help_matches_golden(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(*([] if sub == "main" else [sub]), "--help")
    assert exc.value.code == 0
    assert capsys.readouterr().out == (GOLDEN / f"help_{sub}.txt").read_text()


def test_run_help_lists_every_flag():
    text = (GOLDEN / "help_run.txt").read_text()
    for flag in ("--domain", "--case", "--oracle", "--policy", "--seed", "--out", "--epochs",
                 "--test-episodes", "--beta-ent", "--beta-util", "--tau", "--alpha", "--gamma", "--epsilon"):
        assert flag in text


def test_flag_defaults_match_experiment_defaults():
    args = cli.build_parser().parse_args(["run", "--domain", "lander", "--oracle", "teacher",
                                          "--policy", "entropy", "--out", "x.csv"])
    assert (args.epochs, args.beta_ent, args.beta_util, args.tau, args.alpha, args.gamma, args.epsilon) == \
        (40, 0.25, 0.95, 0.9, 0.5, 0.9, 0.05)


# --- run -------------------------------------------------------------------------

def test_run_lock_teacher_prints_zero_failure(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert run_cli(*LOCK_RUN, "--seed", 1, "--out", out) == 0
    assert "failure_pct=0.00" in capsys.readouterr().out
    (row,) = harness.read_rows(out)
    assert float(row["failure_pct"]) == 0.0 and row["seed"] == "1"
    for suffix in ("records.csv", "queries.csv", "net.json"):
        assert (tmp_path / f"r.{suffix}").exists()


def test_run_lander_expert_exit_2(tmp_path, capsys):
    code = run_cli("run", "--domain", "lander", "--oracle", "expert", "--policy", "entropy",
                   "--out", tmp_path / "x.csv")
    assert code == 2
    err = capsys.readouterr().err
    assert "--oracle" in err and "expert unavailable for lander" in err


def test_run_missing_case_exit_2(tmp_path, capsys):
    code = run_cli("run", "--domain", "automata", "--oracle", "teacher", "--policy", "utility",
                   "--out", tmp_path / "x.csv")
    assert code == 2
    assert "--case" in capsys.readouterr().err


def test_run_bad_value_names_flag(tmp_path, capsys):
    assert run_cli(*LOCK_RUN, "--tau", 3, "--out", tmp_path / "x.csv") == 2
    assert "--tau" in capsys.readouterr().err


def test_run_missing_out_dir_exit_2(tmp_path, capsys):
    assert run_cli(*LOCK_RUN, "--out", tmp_path / "nope" / "x.csv") == 2
    assert "--out" in capsys.readouterr().err


def test_run_write_failure_exit_1(tmp_path, capsys):
    blocker = tmp_path / "r.records.csv"
    blocker.mkdir()
    assert run_cli(*LOCK_RUN, "--epochs", 1, "--out", tmp_path / "r.csv") == 1


def test_run_rl_and_lander_extra_files(tmp_path):
    assert run_cli(*LOCK_RUN[:-1], "rl-train-test", "--epochs", 1, "--out", tmp_path / "a.csv") == 0
    assert (tmp_path / "a.qtable.csv").read_text().startswith("state,q_query,q_learned")
    assert run_cli("run", "--domain", "lander", "--oracle", "none", "--policy", "random", "--epochs", 1,
                   "--test-episodes", 1, "--out", tmp_path / "l.csv") == 0
    header = (tmp_path / "l.trajectory.csv").read_text().splitlines()[0]
    assert header == "step,x,y,angle,vx,vy,omega,engine,inject,success,reward"


def _seed_in(path):
    return harness.read_rows(path)[0]["seed"]


def test_seed_precedence(tmp_path, monkeypatch):
    base = (*LOCK_RUN, "--epochs", 1)
    assert run_cli(*base, "--out", tmp_path / "d.csv") == 0
    assert _seed_in(tmp_path / "d.csv") == "0"
    monkeypatch.setenv("QSC_SEED", "7")
    assert run_cli(*base, "--out", tmp_path / "e.csv") == 0
    assert _seed_in(tmp_path / "e.csv") == "7"
    assert run_cli(*base, "--seed", 3, "--out", tmp_path / "f.csv") == 0
    assert _seed_in(tmp_path / "f.csv") == "3"
    monkeypatch.setenv("QSC_SEED", "seven")
    assert run_cli(*base, "--out", tmp_path / "g.csv") == 2


def test_run_records_byte_identical(tmp_path):
    argv = ("run", "--domain", "automata", "--case", "strategy", "--oracle", "expert", "--policy", "entropy",
            "--seed", 4, "--epochs", 5)
    assert run_cli(*argv, "--out", tmp_path / "a.csv") == 0
    assert run_cli(*argv, "--out", tmp_path / "b.csv") == 0
    for suffix in ("csv", "records.csv", "queries.csv", "net.json"):
        assert (tmp_path / f"a.{suffix}").read_bytes() == (tmp_path / f"b.{suffix}").read_bytes()


# --- suite -----------------------------------------------------------------------

def test_suite_prints_table_and_writes_files(tmp_path, capsys):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"cases": ["combination-lock"], "seeds": [0, 1], "epochs": 1}))
    assert run_cli("suite", "--config", cfg, "--out", tmp_path / "out") == 0
    table = capsys.readouterr().out.splitlines()
    header = table[0].split()
    assert header[:2] == ["case", "O"]
    assert header[2:] == list(harness.POLICIES)
    assert [line.split()[1] for line in table[2:]] == ["T", "E"]
    for name in ("results.csv", "aggregate.csv", "queries.csv"):
        assert (tmp_path / "out" / name).exists()


def test_suite_missing_file_exit_2(tmp_path, capsys):
    assert run_cli("suite", "--config", tmp_path / "none.json") == 2
    assert "--config" in capsys.readouterr().err


@pytest.mark.parametrize("doc", ['{"cases": ["maze"]}', '{"bogus": 1}', "not json",
                                 '{"domain": "water"}', '{"policies": ["entropy"], "oracles": ["none"]}'])
def test_suite_bad_config_exit_2(tmp_path, doc):
    cfg = tmp_path / "suite.json"
    cfg.write_text(doc)
    assert run_cli("suite", "--config", cfg) == 2


# --- inspect ---------------------------------------------------------------------

def test_inspect_bundled(capsys):
    assert run_cli("inspect", "--automata", "combination-lock") == 0
    out = capsys.readouterr().out
    assert "en(e0) = {a,c}" in out
    assert "en(s3) = {b}" in out
    assert out.rstrip().endswith("valid: yes")


def test_inspect_round_trip_stable(tmp_path, capsys):
    assert run_cli("inspect", "--automata", "combination_lock") == 0
    bundled_out = capsys.readouterr().out
    path = tmp_path / "pair.json"
    write_pair(path, *make_combination_lock())
    assert run_cli("inspect", "--automata", path) == 0
    assert capsys.readouterr().out == bundled_out


def test_inspect_invalid_file(tmp_path, capsys):
    path = tmp_path / "bad.json"
    ctrl, env = make_combination_lock()
    doc = {"control": ctrl.to_document(), "env": env.to_document()}
    doc["env"]["transitions"] = [t for t in doc["env"]["transitions"] if t["from"] != "s3"]
    path.write_text(json.dumps(doc))
    assert run_cli("inspect", "--automata", path) == 2
    assert "empty enabled set" in capsys.readouterr().err
    assert run_cli("inspect", "--automata", tmp_path / "missing.json") == 2


# --- plot ------------------------------------------------------------------------

def _queries_csv(tmp_path):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"cases": ["combination_lock"], "policies": ["utility"], "seeds": [0, 1, 2],
                               "epochs": 4}))
    assert run_cli("suite", "--config", cfg, "--out", tmp_path / "s") == 0
    return tmp_path / "s"


def test_plot_queries_structure(tmp_path):
    d = _queries_csv(tmp_path)
    out = tmp_path / "q.svg"
    assert run_cli("plot", "--in", d / "queries.csv", "--kind", "queries", "--out", out) == 0
    root = ElementTree.parse(out).getroot()
    lines = root.findall(f"{SVG}polyline")
    # one line per (seed, oracle) run
    assert len(lines) == 3 * 2
    rows = harness.read_rows(d / "queries.csv")
    ymax = max(float(r["queries"]) for r in rows)
    texts = {t.get("class"): t.text for t in root.findall(f"{SVG}text") if t.get("class")}
    assert float(texts["yhi"]) == ymax and float(texts["ylo"]) == 0
    assert (texts["xlo"], texts["xhi"]) == ("1", "4")
    for line in lines:
        for pt in line.get("points").split():
            x, y = map(float, pt.split(","))
            assert 50 <= x <= 590 and 50 <= y <= 350


def test_plot_failure_bars(tmp_path):
    d = _queries_csv(tmp_path)
    out = tmp_path / "f.svg"
    assert run_cli("plot", "--in", d / "aggregate.csv", "--kind", "failure", "--out", out) == 0
    assert len(ElementTree.parse(out).getroot().findall(f"{SVG}rect")) == 2


def test_plot_empty_csv_exit_2(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run_cli("plot", "--in", empty, "--kind", "queries", "--out", tmp_path / "x.svg") == 2
    header_only = tmp_path / "h.csv"
    header_only.write_text("case,oracle,policy,seed,epoch,queries\n")
    assert run_cli("plot", "--in", header_only, "--kind", "queries", "--out", tmp_path / "x.svg") == 2


def test_plot_malformed_csv_exit_2(tmp_path):
    bad = tmp_path / "b.csv"
    bad.write_text("foo,bar\n1,2\n")
    assert run_cli("plot", "--in", bad, "--kind", "queries", "--out", tmp_path / "x.svg") == 2
    assert run_cli("plot", "--in", bad, "--kind", "failure", "--out", tmp_path / "x.svg") == 2
    assert run_cli("plot", "--in", tmp_path / "missing.csv", "--kind", "failure", "--out", tmp_path / "x.svg") == 2
