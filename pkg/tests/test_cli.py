import json

import pytest
from click.testing import CliRunner

from croce.cli import main

TOML = """
out_dir = "{out}"
consensus_k = 3
eval_k = 3
n_folds = 1
gammas = [0.7, 0.9]
steps = 30
max_test_instances = 4
seed = 7

[dataset]
name = "moons"
n = 160
noise = 0.1
seed = 0

[classifier]
hidden_sizes = [8]
epochs = 15
batch_size = 16

[flow]
n_layers = 1
hidden = 16
epochs = 10
batch_size = 32
patience = 5
cond_embed = "none"
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "exp.toml"
    cfg.write_text(TOML.format(out=root / "run"))
    return root, cfg


def invoke(args):
    result = CliRunner().invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestPipelineCommands:
    def test_train_ensemble(self, workdir):
        root, cfg = workdir
        out = invoke(["train-ensemble", "--config", str(cfg)])
        assert "offline artifacts ready" in out.output
        assert (root / "run" / "fold0" / "base_model.npz").exists()

    def test_train_flow(self, workdir):
        root, cfg = workdir
        invoke(["train-flow", "--config", str(cfg)])
        assert (root / "run" / "fold0" / "flow.npz").exists()

    def test_generate_and_evaluate(self, workdir):
        root, cfg = workdir
        invoke(["generate", "--config", str(cfg), "--method", "croce"])
        results = root / "run" / "reports" / "croce" / "results.jsonl"
        assert results.exists()
        invoke(["evaluate", "--config", str(cfg), "--method", "croce"])
        report = json.loads((root / "run" / "reports" / "croce" / "report.json").read_text())
        assert "gamma=0.7,alpha=5.0" in report

    def test_gamma_override_changes_cells(self, workdir, tmp_path):
        root, cfg = workdir
        invoke(["generate", "--config", str(cfg), "--gamma", "0.6", "--out", str(tmp_path / "o")])
        recs = [
            json.loads(l)
            for l in (tmp_path / "o" / "reports" / "croce" / "results.jsonl").read_text().splitlines()
        ]
        assert {r["gamma"] for r in recs} == {0.6}

    def test_sweep_writes_csv(self, workdir):
        root, cfg = workdir
        invoke(["sweep", "--config", str(cfg), "--sweep", "gamma"])
        assert (root / "run" / "reports" / "sweep_gamma.csv").exists()

    def test_missing_config_rejected(self):
        result = CliRunner().invoke(main, ["generate", "--config", "absent.toml"])
        assert result.exit_code != 0
