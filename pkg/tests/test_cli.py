import json
import subprocess
import sys

import pytest

from mabr.cli import main
from mabr.neuralnet import init, load_checkpoint, save_checkpoint
from mabr.config import Config
from mabr.training import AGENTS, actor_spec

TINY = ["--set", "sim.n_traces=6", "--set", "sim.trace_seconds=12", "--set", "sim.content_pool=1",
        "--set", "sim.train_episode_seconds=6", "--set", "ppo.rollout_length=60",
        "--set", "ppo.res_rollout_length=12", "--set", "ppo.minibatch=30", "--set", "ppo.epochs=1",
        "--set", "ppo.foundation_iterations=1", "--set", "ppo.res_foundation_iterations=1",
        "--set", "ppo.team_iterations=1", "--set", "ppo.validation_episodes=1"]


@pytest.fixture(scope="module")
def traces(tmp_path_factory):
    out = tmp_path_factory.mktemp("traces")
    assert main(["synth-traces", "--out", str(out), "--n", "5", "--seconds", "6",
                 "--content", "1", "--seed", "3"]) == 0
    return out


def _write_manifest(traces):
    lines = [f"{p.name} content=content-0.csv" for p in sorted(traces.glob("*.csv"))
             if not p.name.startswith("content")]
    path = traces / "with-content.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_synth_traces_writes_manifest(traces):
    names = (traces / "manifest.txt").read_text().split()
    assert sum(n.endswith(".csv") for n in names) == 5
    assert (traces / "content-0.csv").exists()


def test_eval_two_controllers_five_traces(traces, tmp_path, capsys):
    manifest = _write_manifest(traces)
    assert main(["eval", "--controllers", "gcc_on,gcc_off", "--manifest", str(manifest),
                 "--seed", "1", "--out-root", str(tmp_path)]) == 0
    (run,) = list(tmp_path.iterdir())
    assert run.name.startswith("eval-") and run.name.endswith("-seed1")
    assert len(list(run.glob("report_*.json"))) == 10
    assert len(list(run.glob("summary.json"))) == 1
    summary = json.loads((run / "summary.json").read_text())
    assert summary["episodes"] == {"gcc_on": 5, "gcc_off": 5}
    assert (run / "seed.txt").read_text().strip() == "1"
    assert "gcc_off vs gcc_on" in capsys.readouterr().out

    assert main(["compare", str(run), "--reference", "gcc_off"]) == 0
    assert "gcc_on vs gcc_off" in capsys.readouterr().out


def test_eval_mamba_with_checkpoint(traces, tmp_path):
    cfg = Config()
    ckpt = tmp_path / "team.ckpt"
    save_checkpoint(ckpt, {k: init(actor_spec(cfg, k), i) for i, k in enumerate(AGENTS)}, {})
    manifest = _write_manifest(traces)
    assert main(["eval", "--controllers", "mamba", "--checkpoint", str(ckpt), "--manifest",
                 str(manifest), "--episodes", "2", "--seconds", "3", "--seed", "0",
                 "--event-log", "--out-root", str(tmp_path / "runs")]) == 0
    (run,) = list((tmp_path / "runs").iterdir())
    assert len(list(run.glob("report_mamba_*.json"))) == 2
    assert len(list(run.glob("events_mamba_*.csv"))) == 2


def test_train_single_foundation_agent(tmp_path):
    assert main(["train", "--stage", "foundation", "--agent", "qua", "--seed", "5",
                 "--out-root", str(tmp_path)] + TINY) == 0
    (run,) = list(tmp_path.iterdir())
    assert sorted(p.name for p in run.glob("*.ckpt")) == ["foundation_qua.ckpt"]
    log = (run / "training_log.csv").read_text().splitlines()
    assert log[0].startswith("epoch,stage,agent")
    assert len(log) >= 3
    nets, meta = load_checkpoint(run / "foundation_qua.ckpt")
    assert set(nets) == {"actor", "critic"} and meta["agent"] == "qua"
    assert "ppo.rollout_length = 60" in (run / "config.txt").read_text()


def test_team_stage_needs_foundation_checkpoints(tmp_path, capsys):
    assert main(["train", "--stage", "team", "--seed", "0", "--out-root", str(tmp_path)] + TINY) == 2
    assert main(["train", "--stage", "team", "--seed", "0", "--init-dir", str(tmp_path / "nope"),
                 "--out-root", str(tmp_path)] + TINY) == 3


def test_unknown_key_exits_2(tmp_path, capsys):
    code = main(["eval", "--controllers", "gcc_on", "--seed", "0", "--set", "sim.bogus=1",
                 "--out-root", str(tmp_path)])
    assert code == 2
    assert "sim.bogus" in capsys.readouterr().err
    assert main(["eval", "--controllers", "nope", "--seed", "0", "--out-root", str(tmp_path)]) == 2


def test_missing_files_exit_3(tmp_path, capsys):
    assert main(["eval", "--controllers", "gcc_on", "--seed", "0", "--config",
                 str(tmp_path / "missing.cfg"), "--out-root", str(tmp_path)]) == 3
    assert main(["compare", str(tmp_path / "none")]) == 3
    assert main(["eval", "--controllers", "mamba", "--seed", "0", "--out-root", str(tmp_path)]) == 2


def test_seed_is_required():
    with pytest.raises(SystemExit):
        main(["train"])


def test_inspect_trace(traces, capsys):
    path = next(p for p in sorted(traces.glob("*.csv")) if not p.name.startswith("content"))
    assert main(["inspect-trace", str(path)]) == 0
    out = capsys.readouterr().out
    assert "samples     12" in out and "duration    6.000 s" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mabr", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth-traces" in proc.stdout
