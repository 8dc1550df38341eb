import json

import pytest

from concentra.cli import SUBCOMMANDS, build_parser, main

CONFIG = {"n": 24, "p": 32, "S": 1, "sigma": 0.5, "ensemble": "partial_orthonormal",
          "trials": 5, "alpha": 6.0, "mc_samples": 500,
          "sweep": {"example": "sg", "ns": [100, 1000, 10000]},
          "power": {"xi": 0.3, "rho": 0.5, "ns": [24, 30], "alphas": [4.0, 6.0], "taus": [1.0],
                    "confirm_trials": 5}}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(CONFIG))
    assert main(["generate", "--config", str(tmp_path / "cfg.json"), "--certify",
                 "--out", str(tmp_path / "data")]) == 0
    return tmp_path


def _run(capsys, *argv):
    assert main(list(argv)) == 0
    return capsys.readouterr().out


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for name in SUBCOMMANDS:
            assert name in parser._subparsers._group_actions[0].choices

    def test_global_flags_either_side(self):
        a = build_parser().parse_args(["--seed", "3", "sweep"])
        b = build_parser().parse_args(["sweep", "--seed", "3"])
        assert a.seed == b.seed == 3


class TestCommands:
    def test_rip(self, workdir, capsys):
        out = json.loads(_run(capsys, "rip", "--instance", str(workdir / "data/instance.json")))
        assert {"delta", "theta", "method", "a4"} <= set(out) and out["a4"]

    def test_dantzig(self, workdir, capsys):
        out = json.loads(_run(capsys, "dantzig", "--instance", str(workdir / "data/instance.json"),
                              "--observation", str(workdir / "data/observation.json"), "--alpha", "1"))
        assert set(out) == {"beta_hat", "objective", "slack", "lambda_p"}

    def test_posterior_and_dump(self, workdir, capsys):
        out = json.loads(_run(capsys, "posterior", "--instance", str(workdir / "data/instance.json"),
                              "--observation", str(workdir / "data/observation.json"),
                              "--dump", str(workdir / "mix.npz")))
        assert set(out) == {"log_evidence", "top_k_supports", "weights", "mean"}
        assert (workdir / "mix.npz").exists()

    def test_bounds(self, workdir, capsys):
        (workdir / "params.json").write_text(json.dumps({"alpha": 6.0, "tau": 1.0}))
        out = json.loads(_run(capsys, "bounds", "--instance", str(workdir / "data/instance.json"),
                              "--params", str(workdir / "params.json")))
        assert out["vacuous"] is False

    def test_bounds_with_prior(self, workdir, capsys):
        (workdir / "prior.json").write_text(json.dumps({"kind": "laplace", "p": 32, "lambda": 1.0}))
        out = json.loads(_run(capsys, "bounds", "--instance", str(workdir / "data/instance.json"),
                              "--prior", str(workdir / "prior.json")))
        assert out["vacuous"] is True

    def test_verify_lemmas(self, workdir, capsys):
        out = json.loads(_run(capsys, "verify-lemmas", "--instance", str(workdir / "data/instance.json"),
                              "--noise-draws", "50"))
        assert all(r["passed"] for r in out["reports"])
        assert out["noise_event"]["passed"]

    def test_concentrate_outputs(self, workdir):
        assert main(["concentrate", "--config", str(workdir / "cfg.json"), "--out", str(workdir / "c")]) == 0
        assert {p.name for p in (workdir / "c").iterdir()} == {
            "concentrate.csv", "concentrate_frontier.csv", "concentrate_summary.json"}

    def test_sweep_csv(self, workdir, capsys):
        out = _run(capsys, "sweep", "--config", str(workdir / "cfg.json"))
        assert out.splitlines()[0] == "n,p,s,alpha,epsilon,term1,term2,term3,term4,total,vacuous"
        assert len(out.splitlines()) == 4

    def test_sweep_svg(self, workdir, capsys):
        assert _run(capsys, "sweep", "--config", str(workdir / "cfg.json"), "--format", "svg").startswith("<svg")

    def test_power(self, workdir, capsys):
        out = json.loads(_run(capsys, "power", "--config", str(workdir / "cfg.json")))
        assert out["confirmation"]["passed"]

    def test_dantzig_experiment(self, workdir):
        assert main(["dantzig", "--experiment", "--config", str(workdir / "cfg.json"),
                     "--out", str(workdir / "d")]) == 0
        summary = json.loads((workdir / "d/dantzig_summary.json").read_text())
        assert summary["within_bound"]

    def test_unknown_config_key(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text(json.dumps({"n": 5, "extra": 1}))
        assert main(["sweep", "--config", str(tmp_path / "bad.json")]) == 2
        assert "unknown config keys" in capsys.readouterr().err

    def test_same_seed_same_bytes(self, workdir):
        for name in ("a", "b"):
            assert main(["concentrate", "--config", str(workdir / "cfg.json"), "--seed", "9",
                         "--out", str(workdir / name)]) == 0
        assert (workdir / "a/concentrate.csv").read_bytes() == (workdir / "b/concentrate.csv").read_bytes()
