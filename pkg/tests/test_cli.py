import json

import pytest

from stagetrack.cli import main

from conftest import puzzle_script, puzzle_stage, stage_config_json
from stagetrack.config import stage_to_dict


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def puzzle_config_json():
    return stage_to_dict(puzzle_stage())


class TestCoverageCommand:
    def test_rectangle_beats_square(self, write_json, capsys, tmp_path):
        rect = write_json("rect.json", stage_config_json(rect_w=7.55, rect_d=5.70))
        square = write_json("square.json", stage_config_json(rect_w=3.0, rect_d=3.0))
        fractions = {}
        for name, path in (("rect", rect), ("square", square)):
            code, out, _ = run_cli(capsys, "coverage", path, "--out", str(tmp_path / f"{name}.csv"))
            assert code == 0
            line = [l for l in out.splitlines() if l.startswith("covered_fraction=")][0]
            fractions[name] = float(line.split("=")[1])
        assert fractions["square"] < 1.0
        assert fractions["rect"] > fractions["square"]

    def test_zero_range_reports_zero(self, write_json, capsys, tmp_path):
        cfg = write_json("zero.json", stage_config_json(max_range=1e-9))
        code, out, _ = run_cli(capsys, "coverage", cfg, "--out", str(tmp_path / "z.csv"))
        assert code == 0
        assert "covered_fraction=0.000" in out

    def test_grid_csv_shape(self, write_json, capsys, tmp_path):
        cfg = write_json("cfg.json", stage_config_json())
        out_path = tmp_path / "grid.csv"
        code, out, _ = run_cli(capsys, "coverage", cfg, "--cell-size", "0.25", "--out", str(out_path))
        assert code == 0
        lines = out_path.read_text().strip().splitlines()
        assert lines[0] == "x_idx,y_idx,anchors,hdop,covered"
        assert len(lines) == 1 + 42 * 42

    def test_unreadable_config_fails(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "coverage", str(tmp_path / "missing.json"))
        assert code != 0
        assert "error" in err.lower()

    def test_invalid_config_fails(self, write_json, capsys):
        cfg = write_json("bad.json", {"stage": {"width_m": 10.42}})
        code, _, err = run_cli(capsys, "coverage", cfg)
        assert code != 0
        assert "depth_m" in err


class TestSimulateCommand:
    def test_same_seed_byte_identical_logs(self, write_json, capsys, tmp_path):
        cfg = write_json("stage.json", puzzle_config_json())
        script = write_json("script.json", puzzle_script())
        paths = [tmp_path / "a.ndjson", tmp_path / "b.ndjson"]
        for p in paths:
            code, out, _ = run_cli(
                capsys, "simulate", cfg, script, "--seed", "42", "--duration", "30", "--out", str(p)
            )
            assert code == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_puzzle_reaches_end_and_reports_rmse(self, write_json, capsys, tmp_path):
        cfg = write_json("stage.json", puzzle_config_json())
        script = write_json("script.json", puzzle_script())
        out_path = tmp_path / "run.ndjson"
        code, out, _ = run_cli(
            capsys, "simulate", cfg, script, "--seed", "42", "--duration", "30", "--out", str(out_path)
        )
        assert code == 0
        assert "final_scene=end" in out
        raw = float([l for l in out.splitlines() if l.startswith("raw_rmse_m=")][0].split("=")[1])
        fused = float([l for l in out.splitlines() if l.startswith("fused_rmse_m=")][0].split("=")[1])
        assert fused < raw
        # The log's last line is the closing scene transition.
        last = json.loads(out_path.read_text().strip().splitlines()[-1])
        assert last["kind"] == "scene"
        assert last["to"] == "end"

    def test_different_seeds_differ(self, write_json, capsys, tmp_path):
        cfg = write_json("stage.json", puzzle_config_json())
        script = write_json("script.json", puzzle_script())
        a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        run_cli(capsys, "simulate", cfg, script, "--seed", "1", "--duration", "5", "--out", str(a))
        run_cli(capsys, "simulate", cfg, script, "--seed", "2", "--duration", "5", "--out", str(b))
        assert a.read_bytes() != b.read_bytes()


class TestReplayCheckCommand:
    @pytest.fixture
    def fresh_log(self, write_json, capsys, tmp_path):
        cfg = write_json("stage.json", puzzle_config_json())
        script = write_json("script.json", puzzle_script())
        out_path = tmp_path / "run.ndjson"
        code, _, _ = run_cli(
            capsys, "simulate", cfg, script, "--seed", "42", "--duration", "30", "--out", str(out_path)
        )
        assert code == 0
        return out_path

    def test_fresh_log_passes(self, capsys, fresh_log):
        code, out, _ = run_cli(capsys, "replay-check", str(fresh_log))
        assert code == 0
        assert "ok" in out

    def test_deleted_zone_event_fails(self, capsys, fresh_log, tmp_path):
        lines = fresh_log.read_text().strip().splitlines()
        kept = []
        removed_frame = None
        for line in lines:
            rec = json.loads(line)
            if removed_frame is None and rec.get("kind") == "zone_event":
                removed_frame = rec["frame"]
                continue
            kept.append(line)
        mutated = tmp_path / "mutated.ndjson"
        mutated.write_text("\n".join(kept) + "\n")
        code, _, err = run_cli(capsys, "replay-check", str(mutated))
        assert code != 0
        assert str(removed_frame) in err

    def test_edited_scene_fails(self, capsys, fresh_log, tmp_path):
        lines = fresh_log.read_text().strip().splitlines()
        edited = []
        for line in lines:
            rec = json.loads(line)
            if rec.get("kind") == "scene" and not rec.get("forced"):
                rec["frame"] += 3
                line = json.dumps(rec, separators=(",", ":"))
            edited.append(line)
        mutated = tmp_path / "edited.ndjson"
        mutated.write_text("\n".join(edited) + "\n")
        code, _, err = run_cli(capsys, "replay-check", str(mutated))
        assert code != 0


class TestServeCommand:
    def test_port_in_use_exits_nonzero(self, write_json, capsys, tmp_path):
        import socket

        cfg = write_json("stage.json", puzzle_config_json())
        blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        blocker.bind(("127.0.0.1", 0))
        blocker.listen(1)
        port = blocker.getsockname()[1]
        try:
            log = tmp_path / "tiny.ndjson"
            script = write_json("script.json", puzzle_script())
            run_cli(capsys, "simulate", cfg, script, "--seed", "1", "--duration", "1", "--out", str(log))
            code, _, err = run_cli(capsys, "serve", "--replay", str(log), "--port", str(port))
            assert code == 2
            assert "port" in err.lower() or "address" in err.lower()
        finally:
            blocker.close()
