import msgspec
import numpy as np
import pytest

from helpers import conjugate_posterior
from irgaflux import cli
from irgaflux.cli import OutputDocument, RunConfig, config_from_args, load_replay, main
from irgaflux.envs import envs
from irgaflux.exceptions import ConfigError, ParseError
from irgaflux.io import write_dataset_csv
from irgaflux.rotation import Dataset
from irgaflux.synthetic import ScenarioSpec, export_csv, generate
from irgaflux.utils.msgspec import load, msgspec_dumps, save


@pytest.fixture
def plain_csv(tmp_path, small_dataset):
    path = tmp_path / "plain.csv"
    write_dataset_csv(small_dataset, str(path))
    return path


@pytest.fixture
def selection_csv(tmp_path):
    spec = ScenarioSpec(
        family="selection", n=400, r=8, rho=0.0, signal=[1, 0, 0, -1, 0, 0.5, 0, 0], seed=3
    )
    path = tmp_path / "selection.csv"
    export_csv(generate(spec), str(path))
    return path


@pytest.fixture
def covariate_csv(tmp_path):
    spec = ScenarioSpec(family="covariate_adjust", n=60, p=2, q=5, lam=0.4, seed=8)
    path = tmp_path / "covariate.csv"
    export_csv(generate(spec), str(path))
    return path

def test_fit_without_nuisance_is_conjugate(tmp_path, plain_csv, small_dataset):
    output = tmp_path / "fit.json"
    code = main(
        [
            "--mode", "fit",
            "--input", str(plain_csv),
            "--beta-prior", "gaussian",
            "--psi", "2",
            "--sigma2", "1",
            "--output", str(output),
        ]
    )
    assert code == 0
    document = load(str(output), type=OutputDocument)
    mean, cov = conjugate_posterior(small_dataset.X, small_dataset.y, 1.0, 2.0)
    np.testing.assert_allclose(document.posterior_mean, mean, atol=1e-8)
    np.testing.assert_allclose(document.posterior_sd, np.sqrt(np.diag(cov)), atol=1e-8)
    assert document.variables == ["x_1", "x_2", "x_3"]
    assert document.log_odds == [None, None, None]
    assert document.inclusion_probs == [1.0, 1.0, 1.0]
    assert document.estimator["name"] == "zero"


def test_output_document_is_byte_stable(tmp_path, plain_csv):
    output = tmp_path / "fit.json"
    assert main(["--mode", "fit", "--input", str(plain_csv), "--sigma2", "1",
                 "--output", str(output)]) == 0
    raw = output.read_bytes()
    assert msgspec_dumps(load(str(output), type=OutputDocument)) + b"\n" == raw


def test_select_matches_enumeration(tmp_path, selection_csv):
    select_out = tmp_path / "select.json"
    oracle_out = tmp_path / "oracle.json"
    common = ["--input", str(selection_csv), "--sigma2", "1"]
    assert main(["--mode", "select", "--estimator", "exact", "--workers", "2",
                 "--output", str(select_out), *common]) == 0
    assert main(["--mode", "oracle", "--output", str(oracle_out), *common]) == 0
    selected = load(str(select_out), type=OutputDocument)
    oracle = load(str(oracle_out), type=OutputDocument)
    assert selected.config.block_size is None
    assert len(selected.sigma2_by_variable) == 8
    np.testing.assert_allclose(selected.inclusion_probs, oracle.inclusion_probs, atol=0.05)
    assert oracle.timings.keys() == {"oracle"}


def test_replay_repeats_the_run(tmp_path, selection_csv):
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    assert main(["--mode", "select", "--input", str(selection_csv), "--block-size", "2",
                 "--seed", "5", "--output", str(first)]) == 0
    assert main(["--replay", str(first), "--output", str(second)]) == 0
    a = msgspec.to_builtins(load(str(first), type=OutputDocument))
    b = msgspec.to_builtins(load(str(second), type=OutputDocument))
    for doc in (a, b):
        doc.pop("timings")
        doc["config"].pop("output")
    assert a == b


def test_load_replay_rejects_other_files(tmp_path):
    bogus = tmp_path / "bogus.json"
    bogus.write_text('{"hello": 1}\n')
    with pytest.raises(ParseError):
        load_replay(str(bogus))
    with pytest.raises(ParseError):
        load_replay(str(tmp_path / "missing.json"))


def test_config_needs_mode_or_replay():
    args = cli.build_parser().parse_args([])
    with pytest.raises(ConfigError, match="--mode or --replay"):
        config_from_args(args)


def test_run_config_validation(plain_csv):
    with pytest.raises(ConfigError, match="needs --input"):
        RunConfig(mode="fit")
    with pytest.raises(ConfigError, match="lambda"):
        RunConfig(mode="fit", input=str(plain_csv), lam=1.0)
    with pytest.raises(ConfigError, match="workers"):
        RunConfig(mode="diagnose", workers=0)


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,x_1\n1.0,abc\n")
    output = tmp_path / "error.json"
    assert main(["--mode", "fit", "--input", str(bad), "--output", str(output)]) == 2
    record = load(str(output))
    assert record["error"] == "ParseError"
    assert record["exit_code"] == 2
    assert record["details"]["line"] == 2
    stderr_record = msgspec.json.decode(capsys.readouterr().err.strip().splitlines()[-1])
    assert stderr_record == record


def test_missing_input_exit_code(tmp_path):
    assert main(["--mode", "fit", "--input", str(tmp_path / "nope.csv")]) == 3


def test_no_mode_exit_code():
    assert main([]) == 3


def test_rank_deficient_exit_code(tmp_path, rng):
    X = rng.standard_normal((30, 2))
    X = np.hstack([X, X[:, :1]])
    path = tmp_path / "collinear.csv"
    write_dataset_csv(Dataset(y=rng.standard_normal(30), X=X), str(path))
    assert main(["--mode", "fit", "--input", str(path), "--sigma2", "1"]) == 4


def test_enumeration_limit_exit_code(tmp_path, rng):
    path = tmp_path / "wide.csv"
    write_dataset_csv(
        Dataset(y=rng.standard_normal(40), X=rng.standard_normal((40, 16))), str(path)
    )
    output = tmp_path / "error.json"
    code = main(["--mode", "oracle", "--input", str(path), "--sigma2", "1",
                 "--output", str(output)])
    assert code == 5
    assert load(str(output))["details"] == {"given": 16, "limit": 15}


def test_select_rejects_gp_estimator(selection_csv):
    assert main(["--mode", "select", "--input", str(selection_csv),
                 "--estimator", "gp"]) == 3


def test_bad_choice_exits_through_argparse():
    with pytest.raises(SystemExit) as info:
        main(["--mode", "teleport"])
    assert info.value.code == 2


def test_unexpected_failure_exit_code(mocker, plain_csv, capsys):
    fake = mocker.Mock(side_effect=RuntimeError("boom"))
    mocker.patch.dict(cli._DISPATCH, {"fit": fake})
    assert main(["--mode", "fit", "--input", str(plain_csv)]) == 1
    fake.assert_called_once()
    record = msgspec.json.decode(capsys.readouterr().err.strip().splitlines()[-1])
    assert record == {"error": "RuntimeError", "message": "boom", "exit_code": 1}


def test_run_writes_dispatched_document(mocker, tmp_path, plain_csv):
    output = tmp_path / "out.json"
    config = RunConfig(mode="fit", input=str(plain_csv), output=str(output))
    document = OutputDocument(mode="fit", seed=0, config=config, variables=["x_1"])
    mocker.patch.dict(cli._DISPATCH, {"fit": lambda _: document})
    assert cli.run(config) is document
    assert load(str(output), type=OutputDocument) == document


def test_oracle_gibbs_has_no_sds(tmp_path, selection_csv):
    output = tmp_path / "gibbs.json"
    assert main(["--mode", "oracle", "--oracle-method", "gibbs", "--input",
                 str(selection_csv), "--burnin", "200", "--recorded", "2000",
                 "--output", str(output)]) == 0
    document = load(str(output), type=OutputDocument)
    assert document.posterior_sd == [None] * 8
    assert document.reference["batch_length"] == 44


@pytest.mark.slow
def test_diagnose_theorem2(tmp_path):
    output = tmp_path / "diag.json"
    assert main(["--mode", "diagnose", "--check", "theorem2", "--output", str(output)]) == 0
    diagnostics = load(str(output), type=OutputDocument).diagnostics
    assert diagnostics["check"] == "theorem2"
    assert diagnostics["bound_holds"] is True


def test_saved_record_matches_error(tmp_path):
    path = tmp_path / "record.json"
    save(ParseError("bad", path="x.csv").to_record(), str(path))
    assert load(str(path))["details"] == {"path": "x.csv"}


@pytest.mark.parametrize(
    "csv, args",
    [
        ("covariate_csv", ["--mode", "fit", "--estimator", "vamp"]),
        ("covariate_csv", ["--mode", "fit", "--estimator", "exact"]),
        ("selection_csv", ["--mode", "select", "--block-size", "2", "--compare",
                           "--burnin", "100", "--recorded", "1000"]),
        ("selection_csv", ["--mode", "oracle"]),
        ("selection_csv", ["--mode", "oracle", "--oracle-method", "gibbs",
                           "--burnin", "100", "--recorded", "1000"]),
    ],
)
def test_documents_are_bit_identical_across_runs_and_workers(
    request, monkeypatch, tmp_path, csv, args
):
    monkeypatch.setattr(envs, "record_timings", False)
    output = tmp_path / "run.json"
    common = ["--input", str(request.getfixturevalue(csv)), "--sigma2", "1", "--seed", "9",
              "--output", str(output)]
    runs = []
    for workers in ("1", "1", "3"):
        assert main([*args, *common, "--workers", workers]) == 0
        runs.append(output.read_bytes())
    assert runs[0] == runs[1]

    def without_config(raw):
        document = msgspec.json.decode(raw)
        assert "timings" not in document
        document.pop("config")
        return document

    assert without_config(runs[0]) == without_config(runs[2])


def test_diagnose_document_omits_timings_when_disabled(monkeypatch, tmp_path):
    monkeypatch.setattr(envs, "record_timings", False)
    output = tmp_path / "diag.json"
    assert main(["--mode", "diagnose", "--check", "consistency", "--replicates", "2",
                 "--output", str(output)]) == 0
    assert load(str(output), type=OutputDocument).timings == {}
