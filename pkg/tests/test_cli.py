"""CLI contract: JSON summaries, tensor files in and out, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from evidfuse import (
    WeightSchedule,
    dynamic_weight,
    evidence_to_belief,
    fuse_volumes,
    load_tensor,
    rank_voxels,
    restore_predictions,
    save_tensor,
    uncertainty_volume,
    weight_volume,
    weighted_loss,
)
from evidfuse.cli import main as cli_main


def run_cli(capsys, *argv):
    """Invoke the CLI in process; return (exit code, summary dict, stdout)."""
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    summary = None
    if code == 0 and captured.out.strip():
        summary = json.loads(captured.out.strip().splitlines()[-1])
    return code, summary, captured


def random_belief_volume(rng, shape=(4, 4, 4), n_classes=2):
    flat = rng.dirichlet(np.ones(n_classes + 1),
                         size=int(np.prod(shape))).astype(np.float32)
    return flat.reshape(shape + (n_classes + 1,))


class TestSummarySchema:
    def test_fields_present(self, tmp_path, capsys):
        rng = np.random.default_rng(42)
        a = random_belief_volume(rng)
        b = random_belief_volume(rng)
        pa, pb = tmp_path / "a.npy", tmp_path / "b.npy"
        out = tmp_path / "fused.npy"
        save_tensor(a, str(pa))
        save_tensor(b, str(pb))
        code, summary, _ = run_cli(capsys, "fuse", "--a", str(pa),
                                   "--b", str(pb), "--out", str(out))
        assert code == 0
        assert set(summary) == {"command", "inputs", "outputs", "stats",
                                "elapsed_ms"}
        assert summary["command"] == "fuse"
        assert summary["inputs"] == {"a": str(pa), "b": str(pb)}
        assert summary["outputs"] == {"out": str(out)}
        assert summary["stats"]["classes"] == 2

    def test_help_exits_zero(self, capsys):
        assert cli_main(["--help"]) == 0
        capsys.readouterr()


class TestFuse:
    def test_matches_library_call(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        a = random_belief_volume(rng)
        b = random_belief_volume(rng)
        save_tensor(a, str(tmp_path / "a.npy"))
        save_tensor(b, str(tmp_path / "b.npy"))
        out = tmp_path / "fused.npy"
        code, _, _ = run_cli(capsys, "fuse", "--a", str(tmp_path / "a.npy"),
                             "--b", str(tmp_path / "b.npy"), "--out", str(out))
        assert code == 0
        np.testing.assert_array_equal(load_tensor(str(out)),
                                      fuse_volumes(a, b))

    def test_no_renorm_flag(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        a = random_belief_volume(rng)
        b = random_belief_volume(rng)
        save_tensor(a, str(tmp_path / "a.npy"))
        save_tensor(b, str(tmp_path / "b.npy"))
        out = tmp_path / "raw.npy"
        code, _, _ = run_cli(capsys, "fuse", "--a", str(tmp_path / "a.npy"),
                             "--b", str(tmp_path / "b.npy"),
                             "--out", str(out), "--no-renorm")
        assert code == 0
        raw = load_tensor(str(out))
        assert (raw.sum(axis=-1) < 1.0).any()


class TestBeliefAndUncertainty:
    def test_belief_with_probabilities(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        logits = rng.normal(0, 2, size=(3, 3, 3, 2)).astype(np.float32)
        save_tensor(logits, str(tmp_path / "logits.npy"))
        out = tmp_path / "belief.npy"
        probs = tmp_path / "probs.npy"
        code, summary, _ = run_cli(
            capsys, "belief", "--logits", str(tmp_path / "logits.npy"),
            "--out", str(out), "--probabilities", str(probs))
        assert code == 0
        belief = load_tensor(str(out))
        np.testing.assert_array_equal(belief, evidence_to_belief(logits))
        p = load_tensor(str(probs))
        assert p.shape == (3, 3, 3, 2)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-5)
        assert summary["outputs"]["probabilities"] == str(probs)

    def test_uncertainty_stats(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        belief = random_belief_volume(rng)
        save_tensor(belief, str(tmp_path / "belief.npy"))
        out = tmp_path / "u.npy"
        code, summary, _ = run_cli(
            capsys, "uncertainty", "--belief", str(tmp_path / "belief.npy"),
            "--out", str(out))
        assert code == 0
        u = load_tensor(str(out))
        np.testing.assert_array_equal(u, uncertainty_volume(belief))
        np.testing.assert_allclose(summary["stats"]["min"], float(u.min()))
        np.testing.assert_allclose(summary["stats"]["max"], float(u.max()))


class TestWeightingCommands:
    def test_weights_match_library(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        u = rng.uniform(0, 1, size=(4, 4, 4)).astype(np.float32)
        save_tensor(u, str(tmp_path / "u.npy"))
        out = tmp_path / "w.npy"
        code, _, _ = run_cli(capsys, "weights", "--u", str(tmp_path / "u.npy"),
                             "--out", str(out), "--epoch", "3",
                             "--epochs", "9", "--epsilon", "0.8")
        assert code == 0
        sched = WeightSchedule(epsilon=0.8, epoch=3, total_epochs=9)
        np.testing.assert_allclose(load_tensor(str(out)),
                                   weight_volume(u, sched), atol=1e-7)

    def test_batched_weights_equal_looped(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        stack = rng.uniform(0, 1, size=(6, 30)).astype(np.float32)
        save_tensor(stack, str(tmp_path / "u.npy"))
        out = tmp_path / "w.npy"
        code, _, _ = run_cli(capsys, "weights", "--u", str(tmp_path / "u.npy"),
                             "--out", str(out), "--epoch", "2", "--epochs", "5",
                             "--batched")
        assert code == 0
        got = load_tensor(str(out))
        sched = WeightSchedule(epsilon=1.0, epoch=2, total_epochs=5)
        for k in range(stack.shape[0]):
            np.testing.assert_allclose(got[k], weight_volume(stack[k], sched),
                                       atol=1e-7)

    def test_rank_saved_as_exact_floats(self, tmp_path, capsys):
        rng = np.random.default_rng(6)
        u = rng.uniform(0, 1, size=(3, 3, 3)).astype(np.float32)
        save_tensor(u, str(tmp_path / "u.npy"))
        out = tmp_path / "ranks.npy"
        code, _, _ = run_cli(capsys, "rank", "--u", str(tmp_path / "u.npy"),
                             "--out", str(out))
        assert code == 0
        ranks = load_tensor(str(out))
        assert ranks.dtype == np.float32
        np.testing.assert_array_equal(ranks.astype(np.int32), rank_voxels(u))

    def test_weighted_loss_scalar(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        loss = rng.uniform(0, 2, size=27).astype(np.float32)
        u = rng.uniform(0, 1, size=27).astype(np.float32)
        save_tensor(loss, str(tmp_path / "loss.npy"))
        save_tensor(u, str(tmp_path / "u.npy"))
        code, summary, _ = run_cli(
            capsys, "weighted-loss", "--loss", str(tmp_path / "loss.npy"),
            "--u", str(tmp_path / "u.npy"), "--epoch", "1", "--epochs", "4")
        assert code == 0
        sched = WeightSchedule(epsilon=1.0, epoch=1, total_epochs=4)
        expected = weighted_loss(loss, u, sched)
        np.testing.assert_allclose(summary["stats"]["weighted_loss"],
                                   [expected], atol=1e-9)
        assert summary["stats"]["batched"] is False

    def test_weight_at_matches_library(self, capsys):
        code, summary, _ = run_cli(
            capsys, "weight-at", "--rank", "1,108,216", "--count", "216",
            "--epoch", "10", "--epochs", "10")
        assert code == 0
        sched = WeightSchedule(epsilon=1.0, epoch=10, total_epochs=10)
        expected = [dynamic_weight(sched, s, 216) for s in (1, 108, 216)]
        np.testing.assert_allclose(summary["stats"]["weights"], expected,
                                   atol=1e-9)

    def test_weight_at_bad_rank_list(self, capsys):
        code = cli_main(["weight-at", "--rank", "1,x", "--count", "10",
                         "--epoch", "1", "--epochs", "2"])
        capsys.readouterr()
        assert code == 1


class TestMixRestore:
    def test_round_trip_through_files(self, tmp_path, capsys):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(5, 5, 5)).astype(np.float32)
        b = rng.normal(size=(5, 5, 5)).astype(np.float32)
        save_tensor(a, str(tmp_path / "a.npy"))
        save_tensor(b, str(tmp_path / "b.npy"))
        code, summary, _ = run_cli(
            capsys, "mix", "--a", str(tmp_path / "a.npy"),
            "--b", str(tmp_path / "b.npy"), "--zero-size", "3,3,3",
            "--seed", "5", "--out-a", str(tmp_path / "ma.npy"),
            "--out-b", str(tmp_path / "mb.npy"),
            "--out-mask", str(tmp_path / "mask.npy"))
        assert code == 0
        assert summary["stats"]["zero_voxels"] == 27
        code, _, _ = run_cli(
            capsys, "restore", "--a", str(tmp_path / "ma.npy"),
            "--b", str(tmp_path / "mb.npy"),
            "--mask", str(tmp_path / "mask.npy"),
            "--out-a", str(tmp_path / "ra.npy"),
            "--out-b", str(tmp_path / "rb.npy"))
        assert code == 0
        np.testing.assert_array_equal(load_tensor(str(tmp_path / "ra.npy")), a)
        np.testing.assert_array_equal(load_tensor(str(tmp_path / "rb.npy")), b)

    def test_explicit_mask_file(self, tmp_path, capsys):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(3, 3, 3)).astype(np.float32)
        b = rng.normal(size=(3, 3, 3)).astype(np.float32)
        mask = np.ones((3, 3, 3), dtype=np.uint8)
        mask[0] = 0
        for name, arr in (("a", a), ("b", b), ("mask", mask)):
            save_tensor(arr, str(tmp_path / f"{name}.npy"))
        code, _, _ = run_cli(
            capsys, "mix", "--a", str(tmp_path / "a.npy"),
            "--b", str(tmp_path / "b.npy"), "--mask", str(tmp_path / "mask.npy"),
            "--out-a", str(tmp_path / "ma.npy"),
            "--out-b", str(tmp_path / "mb.npy"))
        assert code == 0
        mixed_a = load_tensor(str(tmp_path / "ma.npy"))
        np.testing.assert_array_equal(mixed_a[0], b[0])
        np.testing.assert_array_equal(mixed_a[1:], a[1:])

    def test_mask_and_zero_size_exclusive(self, tmp_path, capsys):
        rng = np.random.default_rng(10)
        a = rng.normal(size=(3, 3, 3)).astype(np.float32)
        save_tensor(a, str(tmp_path / "a.npy"))
        code = cli_main(["mix", "--a", str(tmp_path / "a.npy"),
                         "--b", str(tmp_path / "a.npy"),
                         "--mask", str(tmp_path / "a.npy"),
                         "--zero-size", "1,1,1",
                         "--out-a", str(tmp_path / "x.npy"),
                         "--out-b", str(tmp_path / "y.npy")])
        capsys.readouterr()
        assert code == 1

    def test_batched_restore_equals_looped(self, tmp_path, capsys):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        b = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        masks = (rng.uniform(size=(4, 3, 3, 3)) < 0.5).astype(np.uint8)
        for name, arr in (("a", a), ("b", b), ("m", masks)):
            save_tensor(arr, str(tmp_path / f"{name}.npy"))
        code, _, _ = run_cli(
            capsys, "restore", "--a", str(tmp_path / "a.npy"),
            "--b", str(tmp_path / "b.npy"), "--mask", str(tmp_path / "m.npy"),
            "--out-a", str(tmp_path / "ra.npy"),
            "--out-b", str(tmp_path / "rb.npy"), "--batched")
        assert code == 0
        ra = load_tensor(str(tmp_path / "ra.npy"))
        rb = load_tensor(str(tmp_path / "rb.npy"))
        for k in range(4):
            ek_a, ek_b = restore_predictions(a[k], b[k], masks[k])
            np.testing.assert_array_equal(ra[k], ek_a)
            np.testing.assert_array_equal(rb[k], ek_b)


class TestExitCodes:
    def test_missing_file_is_io_error(self, tmp_path, capsys):
        code = cli_main(["uncertainty", "--belief",
                         str(tmp_path / "absent.npy"),
                         "--out", str(tmp_path / "u.npy")])
        capsys.readouterr()
        assert code == 2

    def test_unknown_subcommand_is_validation(self, capsys):
        code = cli_main(["transmogrify"])
        capsys.readouterr()
        assert code == 1

    def test_epoch_out_of_range_is_validation(self, tmp_path, capsys):
        u = np.zeros((2, 2, 2), dtype=np.float32)
        save_tensor(u, str(tmp_path / "u.npy"))
        code = cli_main(["weights", "--u", str(tmp_path / "u.npy"),
                         "--out", str(tmp_path / "w.npy"),
                         "--epoch", "9", "--epochs", "4"])
        capsys.readouterr()
        assert code == 1

    def test_total_conflict_is_numerical(self, tmp_path, capsys):
        a = np.zeros((1, 1, 1, 3), dtype=np.float32)
        b = np.zeros((1, 1, 1, 3), dtype=np.float32)
        a[..., 0] = 1.0
        b[..., 1] = 1.0
        save_tensor(a, str(tmp_path / "a.npy"))
        save_tensor(b, str(tmp_path / "b.npy"))
        code = cli_main(["fuse", "--a", str(tmp_path / "a.npy"),
                         "--b", str(tmp_path / "b.npy"),
                         "--out", str(tmp_path / "f.npy")])
        capsys.readouterr()
        assert code == 3

    def test_error_message_goes_to_stderr(self, tmp_path, capsys):
        code = cli_main(["uncertainty", "--belief",
                         str(tmp_path / "absent.npy"),
                         "--out", str(tmp_path / "u.npy")])
        captured = capsys.readouterr()
        assert code == 2
        assert captured.out == ""
        assert "error:" in captured.err


class TestTrainToyAndEval:
    def test_round_trip_with_config(self, tmp_path, capsys):
        config = tmp_path / "toy.cfg"
        config.write_text(
            "# tiny smoke run\n"
            "pretrain_epochs = 1\n"
            "selftrain_epochs = 1\n"
            "count = 4            # dataset size\n"
            "labeled_count = 2\n"
            "seed = 0\n")
        out_dir = tmp_path / "model"
        code, summary, captured = run_cli(
            capsys, "train-toy", "--config", str(config),
            "--out-dir", str(out_dir))
        assert code == 0
        lines = captured.out.strip().splitlines()
        records = [json.loads(line) for line in lines[:-1]]
        assert [r["stage"] for r in records] == ["pretrain", "selftrain"]
        assert summary["stats"]["labeled"] == 2
        assert summary["stats"]["unlabeled"] == 2
        for name in ("pretrained", "student", "teacher"):
            assert (out_dir / f"{name}.npy").is_file()
        meta = json.loads((out_dir / "meta.json").read_text())
        assert meta["n_classes"] == 2
        assert meta["config"]["pretrain_epochs"] == 1

        code, summary, _ = run_cli(
            capsys, "eval", "--model", str(out_dir), "--which", "student",
            "--count", "2", "--seed", "123")
        assert code == 0
        assert summary["stats"]["count"] == 2
        assert 0.0 <= summary["stats"]["dice"] <= 1.0

    def test_seed_override_beats_config(self, tmp_path, capsys):
        config = tmp_path / "toy.cfg"
        config.write_text("pretrain_epochs = 1\nselftrain_epochs = 0\n"
                          "count = 2\nlabeled_count = 2\nseed = 7\n")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        code, _, _ = run_cli(capsys, "train-toy", "--config", str(config),
                             "--out-dir", str(out_a))
        assert code == 0
        code, _, _ = run_cli(capsys, "train-toy", "--config", str(config),
                             "--seed", "8", "--out-dir", str(out_b))
        assert code == 0
        wa = load_tensor(str(out_a / "student.npy"))
        wb = load_tensor(str(out_b / "student.npy"))
        assert not np.array_equal(wa, wb)
        meta_b = json.loads((out_b / "meta.json").read_text())
        assert meta_b["config"]["seed"] == 8

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("momentum = 0.9\n")
        code = cli_main(["train-toy", "--config", str(config)])
        captured = capsys.readouterr()
        assert code == 1
        # names the unknown key rather than blaming its value
        assert "unknown config key: momentum" in captured.err

    def test_malformed_config_line_rejected(self, tmp_path, capsys):
        config = tmp_path / "bad.cfg"
        config.write_text("pretrain_epochs\n")
        code = cli_main(["train-toy", "--config", str(config)])
        capsys.readouterr()
        assert code == 1


class TestSliceExport:
    def test_pgm_header_and_size(self, tmp_path, capsys):
        rng = np.random.default_rng(12)
        vol = rng.normal(size=(5, 7, 3)).astype(np.float32)
        save_tensor(vol, str(tmp_path / "vol.npy"))
        out = tmp_path / "slice.pgm"
        code, summary, _ = run_cli(
            capsys, "slice-export", "--tensor", str(tmp_path / "vol.npy"),
            "--out", str(out))
        assert code == 0
        data = out.read_bytes()
        assert data.startswith(b"P5\n7 5\n255\n")
        assert len(data) == len(b"P5\n7 5\n255\n") + 5 * 7
        assert summary["stats"]["index"] == 1     # middle of depth 3

    def test_constant_plane_is_black(self, tmp_path, capsys):
        vol = np.full((2, 2, 2), 3.5, dtype=np.float32)
        save_tensor(vol, str(tmp_path / "vol.npy"))
        out = tmp_path / "slice.pgm"
        code, _, _ = run_cli(
            capsys, "slice-export", "--tensor", str(tmp_path / "vol.npy"),
            "--out", str(out))
        assert code == 0
        payload = out.read_bytes().split(b"255\n", 1)[1]
        assert payload == bytes(4)

    def test_channel_selects_from_belief_volume(self, tmp_path, capsys):
        rng = np.random.default_rng(13)
        belief = random_belief_volume(rng, shape=(4, 4, 4))
        save_tensor(belief, str(tmp_path / "belief.npy"))
        out = tmp_path / "slice.pgm"
        code, _, _ = run_cli(
            capsys, "slice-export", "--tensor", str(tmp_path / "belief.npy"),
            "--out", str(out), "--channel", "2", "--axis", "0", "--index", "1")
        assert code == 0
        assert out.read_bytes().startswith(b"P5\n4 4\n255\n")

    def test_bad_channel_rejected(self, tmp_path, capsys):
        rng = np.random.default_rng(14)
        belief = random_belief_volume(rng)
        save_tensor(belief, str(tmp_path / "belief.npy"))
        code = cli_main(["slice-export", "--tensor",
                         str(tmp_path / "belief.npy"),
                         "--out", str(tmp_path / "s.pgm"), "--channel", "9"])
        capsys.readouterr()
        assert code == 1


class TestConsoleScript:
    def test_installed_entry_point_is_deterministic(self, tmp_path):
        """Two subprocess runs agree byte for byte, timing aside."""
        rng = np.random.default_rng(15)
        belief = random_belief_volume(rng, shape=(3, 3, 3))
        save_tensor(belief, str(tmp_path / "belief.npy"))

        def run(out_name):
            out = tmp_path / out_name
            proc = subprocess.run(
                [sys.executable, "-m", "evidfuse.cli", "uncertainty",
                 "--belief", str(tmp_path / "belief.npy"), "--out", str(out)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            summary = json.loads(proc.stdout.strip())
            summary.pop("elapsed_ms")
            return summary, out.read_bytes()

        first = run("u1.npy")
        second = run("u2.npy")
        assert first[0]["outputs"] != second[0]["outputs"]
        first[0].pop("outputs")
        second[0].pop("outputs")
        assert first[0] == second[0]
        assert first[1] == second[1]
