import json
import subprocess
import sys

import pytest

from distlearn import cli
from distlearn.errors import ParseError

SMALL = {
    "name": "small",
    "model": "ClassifyWithAbstention",
    "distribution": {"shipped": "classification_1d"},
    "schedule": {"r0": 0.5, "beta": 0.25},
    "n_list": [10, 40],
    "trials": 3,
    "queries": 20,
    "seed": 1,
    "output": "small.csv",
}


def write_manifest(tmp_path, name="m.json", **changes):
    raw = {**SMALL, **changes}
    raw = {k: v for k, v in raw.items() if v is not None}
    path = tmp_path / name
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


def run_main(*args):
    return cli.main([str(a) for a in args])


class TestValidate:
    def test_valid_manifest(self, tmp_path, capsys):
        assert run_main("validate", write_manifest(tmp_path)) == 0
        out, err = capsys.readouterr()
        assert out == "" and err == ""

    def test_missing_seed(self, tmp_path, capsys):
        assert run_main("validate", write_manifest(tmp_path, seed=None)) != 0
        assert "seed" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "changes, needle",
        [
            ({"model": "Nope"}, "unknown model"),
            ({"distribution": {"shipped": "nope"}}, "unknown shipped distribution"),
            ({"distribution": {"shipped": "classification_1d_pm"}}, "label-space mismatch"),
            ({"n_list": []}, "n_list"),
            ({"n_list": [100, 10]}, "strictly increasing"),
            ({"trials": 0}, "trials"),
            ({"queries": -1}, "queries"),
            ({"expectation": "maybe"}, "expectation"),
        ],
    )
    def test_rejections(self, tmp_path, capsys, changes, needle):
        assert run_main("validate", write_manifest(tmp_path, **changes)) == cli.EXIT_INVALID
        assert needle in capsys.readouterr().err

    def test_invalid_schedule_cites_condition(self, tmp_path, capsys):
        path = write_manifest(
            tmp_path, model="ClassifyNoAbstention",
            distribution={"shipped": "classification_1d_pm"}, schedule={"r0": 0.5, "beta": 1.0},
        )
        assert run_main("validate", path) != 0
        assert "(r_n)^d √n → ∞" in capsys.readouterr().err

    def test_override_accepts_invalid_schedule(self, tmp_path):
        path = write_manifest(tmp_path, schedule={"r0": 0.5, "beta": 1.5}, allow_invalid_schedule=True)
        assert run_main("validate", path) == 0

    def test_reports_every_error(self, tmp_path):
        raw = {**SMALL, "model": "Nope", "n_list": [3, 2]}
        del raw["seed"]
        errors = cli.validate(raw)
        assert len(errors) == 3

    def test_unparseable_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert run_main("validate", path) != 0
        assert "not valid JSON" in capsys.readouterr().err

    def test_one_bit_regression_needs_instance(self, tmp_path):
        path = write_manifest(tmp_path, model="RegressNoAbstention", distribution=None, schedule=None)
        assert run_main("validate", path) != 0


class TestRun:
    def test_sweep_csv(self, tmp_path):
        path = write_manifest(tmp_path)
        assert run_main("--output-dir", tmp_path / "out", "run", path) == 0
        text = (tmp_path / "out" / "small.csv").read_text(encoding="utf-8")
        lines = text.splitlines()
        comments = [l for l in lines if l.startswith("#")]
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "n,mean_risk,std_error,bayes_risk,gap,trials,queries,seed"
        assert [int(l.split(",")[0]) for l in body[1:]] == [10, 40]
        digest = cli.manifest_hash(json.loads(path.read_text(encoding="utf-8")))
        assert f"# manifest_sha256={digest}" in comments
        assert (tmp_path / "out" / "small_summary.txt").exists()

    def test_floats_round_trip(self, tmp_path):
        path = write_manifest(tmp_path)
        run_main("--output-dir", tmp_path, "run", path)
        parsed = cli.read_csv(tmp_path / "small.csv")
        for row in parsed.rows:
            assert row["gap"] == pytest.approx(row["mean_risk"] - row["bayes_risk"], abs=1e-15)

    def test_rerun_and_threads_are_byte_identical(self, tmp_path):
        path = write_manifest(tmp_path)
        outs = []
        for k, threads in enumerate([1, 1, 3]):
            run_main("--threads", threads, "--output-dir", tmp_path / str(k), "run", path)
            outs.append((tmp_path / str(k) / "small.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_counterexample_table(self, tmp_path):
        path = write_manifest(
            tmp_path, model="RegressNoAbstention", distribution=None, schedule=None,
            counterexample={"x0": [0.0], "x1": [1.0], "y0": 0.0, "y1": 1.0, "q": 0.5,
                            "table": [0.9, 0.2, 0.6, 0.3]},
            transfer="midpoint", n_list=[20, 40], expectation="nonconvergent",
        )
        assert run_main("--output-dir", tmp_path, "run", path) == 0
        gap = (tmp_path / "small_counterexample.csv").read_text(encoding="utf-8")
        body = [l for l in gap.splitlines() if not l.startswith("#")]
        assert body[0] == "rule,n,gap_P,gap_Pprime,max_gap"
        assert len(body) == 1 + 5 * 2
        assert "# irreducibility=0.125" in gap

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code = run_main("--output-dir", blocker / "sub", "run", write_manifest(tmp_path))
        assert code == cli.EXIT_IO
        assert "I/O error" in capsys.readouterr().err

    def test_invalid_manifest_is_not_run(self, tmp_path):
        path = write_manifest(tmp_path, seed=None)
        assert run_main("--output-dir", tmp_path, "run", path) != 0
        assert not (tmp_path / "small.csv").exists()

    def test_module_entry_point(self, tmp_path):
        path = write_manifest(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "distlearn", "validate", str(path)], capture_output=True, text=True
        )
        assert proc.returncode == 0, proc.stderr


def sweep_text(gaps, ses, expectation="convergent", max_gap=None):
    lines = ["# name=t", "# model=ClassifyWithAbstention", f"# expectation={expectation}"]
    if max_gap is not None:
        lines.append(f"# max_final_gap={max_gap}")
    lines.append(",".join(cli.SWEEP_HEADER))
    for i, (g, s) in enumerate(zip(gaps, ses)):
        lines.append(f"{10 ** (i + 2)},{0.2 + g},{s},0.2,{g},20,500,0")
    return "\n".join(lines) + "\n"


class TestSummarize:
    def test_decreasing_pass(self, tmp_path, capsys):
        p = tmp_path / "a.csv"
        p.write_text(sweep_text([0.1, 0.04, 0.01], [0.005] * 3, max_gap=0.03))
        assert run_main("summarize", p) == 0
        assert "trend: decreasing, PASS" in capsys.readouterr().out

    def test_flat_nonconvergent(self, tmp_path, capsys):
        p = tmp_path / "b.csv"
        p.write_text(sweep_text([0.31, 0.33, 0.32], [0.01] * 3, expectation="nonconvergent"))
        assert run_main("summarize", p) == 0
        assert "trend: flat, expected-fail PASS" in capsys.readouterr().out

    def test_flat_convergent_fails(self, tmp_path, capsys):
        p = tmp_path / "c.csv"
        p.write_text(sweep_text([0.31, 0.33, 0.32], [0.01] * 3))
        assert run_main("summarize", p) == cli.EXIT_FAIL
        assert "trend: flat, FAIL" in capsys.readouterr().out

    def test_tolerance_applies(self, tmp_path, capsys):
        p = tmp_path / "d.csv"
        p.write_text(sweep_text([0.5, 0.2, 0.1], [0.005] * 3, max_gap=0.05))
        assert run_main("summarize", p) == cli.EXIT_FAIL

    def test_empty_csv(self, tmp_path, capsys):
        p = tmp_path / "e.csv"
        p.write_text("")
        assert run_main("summarize", p) == cli.EXIT_INVALID
        assert "parse error" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "text",
        [
            "a,b,c\n1,2,3\n",
            ",".join(cli.SWEEP_HEADER) + "\n",
            ",".join(cli.SWEEP_HEADER) + "\n1,2,3\n",
            ",".join(cli.SWEEP_HEADER) + "\nx,0.1,0.1,0.1,0.1,1,1,0\n",
        ],
    )
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "f.csv"
        p.write_text(text)
        with pytest.raises(ParseError):
            cli.read_csv(p)


class TestTrend:
    def test_decreasing_with_noisy_tail(self):
        assert cli.trend([0.04, 0.003, -0.003, -0.0027], [0.004] * 4) == "decreasing"

    def test_significant_bump_is_not_decreasing(self):
        assert cli.trend([0.1, 0.01, 0.08, 0.0], [0.001] * 4) == "flat"

    def test_increasing(self):
        assert cli.trend([0.1, 0.2], [0.01, 0.01]) == "increasing"

    def test_single_point(self):
        assert cli.trend([0.1], [0.01]) == "flat"
