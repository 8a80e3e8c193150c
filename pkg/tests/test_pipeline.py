import json
from pathlib import Path

import numpy as np
import pytest

from conftest import mock_command, pool_rows, write_jsonl
from l2smix import benefit
from l2smix.benefit import ValidationReport
from l2smix.errors import ConfigError, DegenerateReferencesError, NoQualifyingCheckpointError, ProtocolError
from l2smix.external import ExternalTrainer, window_seed
from l2smix.mixture import ReweightConfig, eg_update
from l2smix.pipeline import CheckpointRecord, RunConfig, load_config, read_runlog, run_pipeline, select_checkpoint
from l2smix.simulator import ResponseSurface, SimulatedTrainer

QUIET = ResponseSurface(noise_sd_acc=0.0, noise_sd_tok=0.0)


def quiet_config(**kw):
    rw = kw.pop("reweight", ReweightConfig())
    return RunConfig(reweight=rw, surface=QUIET, **kw)


RECORDS = [
    CheckpointRecord("c32", 32, ValidationReport(0.70, 900.0)),
    CheckpointRecord("c64", 64, ValidationReport(0.68, 600.0)),
    CheckpointRecord("c96", 96, ValidationReport(0.50, 400.0)),
]


class TestSelectCheckpoint:
    def test_permissive_factor(self):
        assert select_checkpoint(RECORDS, 0.72, 0.3).step == 96

    def test_strict_factor(self):
        # threshold 0.648 excludes step 96
        assert select_checkpoint(RECORDS, 0.72, 0.9).step == 64

    def test_single_record(self):
        assert select_checkpoint(RECORDS[:1], 0.72, 0.9) is RECORDS[0]

    def test_none_qualify(self):
        with pytest.raises(NoQualifyingCheckpointError):
            select_checkpoint(RECORDS, 0.9, 1.0)

    def test_tie_goes_to_earliest(self):
        recs = [CheckpointRecord("b", 64, ValidationReport(0.7, 500.0)), CheckpointRecord("a", 32, ValidationReport(0.7, 500.0))]
        assert select_checkpoint(recs, 0.7, 1.0).checkpoint_id == "a"

    def test_factor_one_with_improving_accuracy(self):
        recs = [CheckpointRecord(f"c{i}", i, ValidationReport(0.5 + 0.05 * i, 100.0 - i)) for i in range(5)]
        assert select_checkpoint(recs, recs[-1].report.mean_accuracy, 1.0) is recs[-1]


class RecordingTrainer(SimulatedTrainer):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.calls = []

    def train(self, steps, alpha):
        self.calls.append((self.state.step, steps, np.array(alpha).tolist()))
        super().train(steps, alpha)


class TestRunPipeline:
    def test_zero_steps(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=0)))
        assert len(log.entries) == 1
        assert log.entries[0].step == 0
        assert log.averaged_alpha == [0.5, 0.5]

    def test_step0_benefit(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=64)))
        assert log.entries[0].lam == [1.0, 0.0]

    def test_first_update_uses_step0_signal(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=64)))
        expected = eg_update([0.5, 0.5], [1.0, 0.0], 7.0, 1e-4)
        assert log.entries[0].alpha == expected.tolist()

    def test_entry_schedule(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=100, eval_interval=32)))
        assert [e.step for e in log.entries] == [0, 32, 64, 96, 100]

    def test_cadence(self):
        from l2smix.data import DataPool

        cfg = quiet_config(reweight=ReweightConfig(total_steps=96), seed=3)
        trainer = RecordingTrainer(QUIET, DataPool.synthetic(), 4, 3)
        log = run_pipeline(cfg, trainer)
        assert [(s, n) for s, n, _ in trainer.calls] == [(0, 32), (32, 32), (64, 32)]
        for (start, _, alpha), entry in zip(trainer.calls, log.entries):
            assert entry.step == start
            assert alpha == entry.alpha

    def test_logged_objective_consistent(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=320), seed=2))
        for e in log.entries:
            d1 = log.bounds.phi_sys1_bound - (-e.report.mean_tokens)
            d2 = log.bounds.phi_sys2_bound - e.report.mean_accuracy
            assert abs(e.objective - (e.alpha[0] * d1 + e.alpha[1] * d2)) <= 1e-12 * max(1.0, abs(e.objective))

    def test_static_mode_keeps_weights(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=128), static_alpha=(0.8, 0.2)))
        assert all(e.alpha == [0.8, 0.2] for e in log.entries)
        assert log.mode == "static"
        assert log.averaged_alpha == pytest.approx([0.8, 0.2])

    def test_averaged_alpha_over_boundaries(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=128), seed=5))
        np.testing.assert_allclose(log.averaged_alpha, np.mean([e.alpha for e in log.entries], axis=0), atol=1e-15)

    def test_selected_checkpoint_is_shortest_qualifying(self):
        log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=640), seed=1))
        ok = [e for e in log.entries if e.report.mean_accuracy >= 0.3 * 0.75]
        assert log.selected_checkpoint == min(ok, key=lambda e: (e.report.mean_tokens, e.step)).checkpoint_id

    def test_pools_from_files(self, pool_files):
        s1, s2, dev = pool_files
        cfg = quiet_config(reweight=ReweightConfig(total_steps=64), system1_path=str(s1), system2_path=str(s2), dev_path=str(dev))
        log = run_pipeline(cfg)
        assert len(log.entries) == 3

    def test_empty_pool_aborts(self, tmp_path):
        s1 = write_jsonl(tmp_path / "a.jsonl", pool_rows("system1", 2, correct=[False, False]))
        s2 = write_jsonl(tmp_path / "b.jsonl", pool_rows("system2", 2))
        cfg = quiet_config(reweight=ReweightConfig(total_steps=64), system1_path=str(s1), system2_path=str(s2))
        with pytest.raises(Exception, match="system1"):
            run_pipeline(cfg)

    def test_runlog_is_deterministic(self):
        cfg = RunConfig(reweight=ReweightConfig(total_steps=256), seed=42)
        assert run_pipeline(cfg).to_jsonl() == run_pipeline(cfg).to_jsonl()

    def test_noise_changes_with_seed(self):
        a = run_pipeline(RunConfig(reweight=ReweightConfig(total_steps=64), seed=1))
        b = run_pipeline(RunConfig(reweight=ReweightConfig(total_steps=64), seed=2))
        assert a.to_jsonl() != b.to_jsonl()


class TestConfig:
    def test_defaults(self):
        cfg = load_config(env={})
        assert cfg.initial_alpha == (0.5, 0.5)
        assert cfg.reweight.smoothing == 1e-4
        assert cfg.reweight.eval_interval == 32
        assert cfg.reweight.total_steps == 2000
        assert cfg.checkpoint_accuracy_factor == 0.3

    def test_inline_comments(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text("[run]\ntotal_steps = 64   ; T\nstep_size = 2.5 ; eta\n")
        cfg = load_config(path, env={})
        assert (cfg.reweight.total_steps, cfg.reweight.step_size) == (64, 2.5)

    def test_shipped_example(self):
        cfg = load_config(Path(__file__).parents[1] / "configs" / "simulated.ini", env={})
        assert cfg.seed == 42 and cfg.reweight.batch_size == 4

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text(
            "[run]\nseed = 5\ntotal_steps = 64\nstep_size = 2.5\ninitial_alpha = 0.6, 0.4\n"
            "[surface]\nnoise_sd_acc = 0\ndev_size = 128\n[data]\nsystem1 = s1.jsonl\nsystem2 = s2.jsonl\n"
        )
        cfg = load_config(path, env={})
        assert cfg.seed == 5
        assert cfg.reweight.step_size == 2.5
        assert cfg.initial_alpha == (0.6, 0.4)
        assert cfg.surface.dev_size == 128 and cfg.surface.noise_sd_acc == 0.0
        assert cfg.system1_path == str(tmp_path / "s1.jsonl")
        assert load_config(path, env={"L2S_SEED": "9"}).seed == 9
        assert load_config(path, seed=11, env={"L2S_SEED": "9"}).seed == 11
        assert load_config(path, static="0.8:0.2", env={}).static_alpha == (0.8, 0.2)

    @pytest.mark.parametrize(
        "text",
        [
            "[run]\nbogus = 1\n",
            "[nope]\nx = 1\n",
            "[run]\nsmoothing = 2\n",
            "[run]\ninitial_alpha = 0.7, 0.7\n",
            "[run]\ntrainer = external\n",
            "[surface]\nacc_long = 0.1\n",
            "[run]\ntotal_steps = many\n",
        ],
    )
    def test_rejects(self, tmp_path, text):
        path = tmp_path / "cfg.ini"
        path.write_text(text)
        with pytest.raises(ConfigError):
            load_config(path, env={})

    def test_bad_static(self):
        with pytest.raises(ConfigError):
            load_config(static="0.9:0.3", env={})


# -- external trainer ---------------------------------------------------------

SCRIPTED = [
    {"accuracy": 0.72, "mean_tokens": 1300.0, "sample_count": 512, "checkpoint_id": "ckpt-0"},
    {"accuracy": 0.60, "mean_tokens": 800.0, "sample_count": 512, "checkpoint_id": "ckpt-32"},
    {"accuracy": 0.70, "mean_tokens": 450.0, "sample_count": 512, "checkpoint_id": "ckpt-64"},
]


def external_config(tmp_path, mode="ok", reports=SCRIPTED, timeout=20.0, refs=None):
    script = tmp_path / "script.json"
    log = tmp_path / "requests.jsonl"
    script.write_text(json.dumps({"reports": reports, "mode": mode, "log": str(log)}))
    refs = refs or benefit.ReferenceProfile(ValidationReport(0.40, 300.0, 512), ValidationReport(0.72, 1300.0, 512))
    cfg = RunConfig(
        reweight=ReweightConfig(total_steps=64, eval_interval=32),
        seed=42,
        trainer_backend="external",
        external_command=tuple(mock_command(script)),
        external_timeout=timeout,
        references=refs,
    )
    return cfg, log


class TestExternalTrainer:
    def test_scripted_run(self, tmp_path):
        cfg, reqlog = external_config(tmp_path)
        log = run_pipeline(cfg)
        assert [e.checkpoint_id for e in log.entries] == ["ckpt-0", "ckpt-32", "ckpt-64"]
        assert [(e.report.mean_accuracy, e.report.mean_tokens) for e in log.entries] == [(0.72, 1300.0), (0.60, 800.0), (0.70, 450.0)]
        # scripted reports -> independent recomputation of the weight path
        bounds = benefit.estimate_bounds(cfg.references.short_ref, cfg.references.long_ref)
        alpha = np.array([0.5, 0.5])
        for i, e in enumerate(log.entries):
            lam = benefit.benefit_signal(bounds, e.report, cfg.references)
            assert e.lam == lam.tolist()
            if i < 2:
                alpha = eg_update(alpha, lam, 7.0, 1e-4)
            assert e.alpha == alpha.tolist()
        assert log.entries[1].lam == pytest.approx([0.5, 0.375], abs=1e-12)
        assert log.selected_checkpoint == "ckpt-64"

        requests = [json.loads(x) for x in reqlog.read_text().splitlines()]
        assert [r["cmd"] for r in requests] == ["evaluate", "train", "evaluate", "train", "evaluate", "shutdown"]
        trains = [r for r in requests if r["cmd"] == "train"]
        assert [t["steps"] for t in trains] == [32, 32]
        assert trains[0]["alpha"] == log.entries[0].alpha
        assert trains[0]["seed"] == window_seed(42, 0) and trains[1]["seed"] == window_seed(42, 32)
        assert set(trains[0]) == {"cmd", "steps", "alpha", "seed"}

    def test_shutdown_observed(self, tmp_path):
        cfg, _ = external_config(tmp_path)
        tr = ExternalTrainer(cfg.external_command, seed=1, timeout=20)
        tr.evaluate()
        assert tr.close() == 0
        assert tr.returncode == 0

    def test_non_json_reply(self, tmp_path):
        cfg, _ = external_config(tmp_path, mode="non_json")
        with pytest.raises(ProtocolError, match="this is not json") as err:
            run_pipeline(cfg)
        assert any(line.startswith("> ") for line in err.value.transcript)

    def test_out_of_range(self, tmp_path):
        cfg, _ = external_config(tmp_path, mode="out_of_range")
        with pytest.raises(ProtocolError, match="accuracy"):
            run_pipeline(cfg)

    def test_missing_ack(self, tmp_path):
        cfg, _ = external_config(tmp_path, mode="no_ack")
        with pytest.raises(ProtocolError, match="not acknowledged"):
            run_pipeline(cfg)

    def test_timeout(self, tmp_path):
        cfg, _ = external_config(tmp_path, mode="hang", timeout=0.5)
        with pytest.raises(ProtocolError, match="within 0.5s"):
            run_pipeline(cfg)

    def test_child_exits_early(self, tmp_path):
        cfg, _ = external_config(tmp_path, reports=SCRIPTED[:1])
        with pytest.raises(ProtocolError, match="exited"):
            run_pipeline(cfg)

    def test_degenerate_references_abort_before_launch(self, tmp_path):
        refs = benefit.ReferenceProfile(ValidationReport(0.40, 300.0), ValidationReport(0.72, 300.0))
        cfg, reqlog = external_config(tmp_path, refs=refs)
        with pytest.raises(DegenerateReferencesError):
            run_pipeline(cfg)
        assert not reqlog.exists()

    def test_external_config_file(self, tmp_path):
        script = tmp_path / "s.json"
        script.write_text(json.dumps({"reports": SCRIPTED}))
        path = tmp_path / "cfg.ini"
        cmd = " ".join(mock_command(script))
        path.write_text(
            f"[run]\ntrainer = external\ntotal_steps = 64\n[external]\ncommand = {cmd}\ntimeout = 30\n"
            "[references]\nshort_tokens = 300\nshort_accuracy = 0.4\nlong_tokens = 1300\nlong_accuracy = 0.72\nsample_count = 512\n"
        )
        log = run_pipeline(load_config(path, env={}))
        assert log.entries[-1].checkpoint_id == "ckpt-64"


def test_read_runlog_roundtrip(tmp_path):
    log = run_pipeline(quiet_config(reweight=ReweightConfig(total_steps=64)))
    path = tmp_path / "run.jsonl"
    log.write(path)
    entries, summary = read_runlog(path)
    assert len(entries) == 3 and summary["type"] == "summary"
    assert summary["averaged_alpha"] == log.averaged_alpha
