import json
import shutil
from pathlib import Path

import pytest

from mapdr import cli, dataio, synthgen
from tests.conftest import PAPER_CLIP_DIR


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture()
def synth_corpus(tmp_path):
    out = tmp_path / "corpus"
    assert run("synth", "-o", out, "--clips", "4", "--lanes", "3", "--rules", "2", "--seed", "5") == 0
    return out


class TestValidate:
    def test_paper_pair_is_valid(self):
        assert run("validate", PAPER_CLIP_DIR) == 0

    def test_synth_output_is_valid(self, synth_corpus):
        assert run("validate", synth_corpus) == 0

    def test_truncated_file(self, tmp_path, capsys):
        clip_dir = tmp_path / "broken"
        clip_dir.mkdir()
        raw = (PAPER_CLIP_DIR / "data.json").read_text()
        (clip_dir / "data.json").write_text(raw[: len(raw) // 2])
        assert run("validate", clip_dir) == 1
        out = capsys.readouterr().out
        assert out.startswith("error")

    def test_missing_dir(self, tmp_path):
        assert run("validate", tmp_path / "nope") == 2

    def test_error_lines_have_pointers(self, tmp_path, capsys):
        clip_dir = tmp_path / "clip"
        clip_dir.mkdir()
        doc = json.loads((PAPER_CLIP_DIR / "data.json").read_text())
        doc["camera_intrinsic_matrix"][0][1] = 9.0
        (clip_dir / "data.json").write_text(json.dumps(doc))
        assert run("validate", clip_dir) == 1
        out = capsys.readouterr().out
        assert "data.json#/camera_intrinsic_matrix/0/1" in out

    def test_lenient_downgrades_dangling_reference(self, tmp_path):
        clip_dir = tmp_path / "clip"
        shutil.copytree(PAPER_CLIP_DIR, clip_dir)
        doc = json.loads((clip_dir / "label.json").read_text())
        doc["0"]["centerline"] = [99, 17]
        (clip_dir / "label.json").write_text(json.dumps(doc))
        assert run("validate", clip_dir) == 1
        assert run("validate", clip_dir, "--lenient") == 0


class TestSynth:
    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("synth", "-o", out, "--clips", "2", "--seed", "3") == 0
        for rel in ("manifest.json", "clip_0000/data.json", "clip_0001/label.json"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_corrupt_writes_predictions_and_manifest(self, tmp_path):
        out = tmp_path / "c"
        assert run(
            "synth", "-o", out, "--clips", "3", "--lanes", "4", "--rules", "3",
            "--seed", "11", "--corrupt", "--drop-rule-p", "0.3", "--add-edge-p", "0.5",
        ) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["clips"]) == 3
        assert "separating_threshold" in manifest["corruption"]
        for entry in manifest["clips"]:
            assert (out / entry["id"] / "prediction.json").is_file()
            assert set(entry["expected"]) == {
                "gt_rules", "pred_rules", "rule_matches", "gt_edges",
                "pred_edges", "edge_hits", "subgraph_hits",
            }

    def test_bad_config(self, tmp_path):
        assert run("synth", "-o", tmp_path / "x", "--lanes", "2", "--rules", "5") == 2


class TestBaselineCmd:
    def test_in_place(self, synth_corpus):
        assert run("baseline", synth_corpus) == 0
        for clip_id in dataio.list_clip_ids(synth_corpus):
            assert (synth_corpus / clip_id / "prediction.json").is_file()

    def test_out_dir(self, synth_corpus, tmp_path):
        out = tmp_path / "preds"
        assert run("baseline", synth_corpus, "-o", out, "--jobs", "2") == 0
        assert sorted(p.name for p in out.iterdir()) == dataio.list_clip_ids(synth_corpus)


class TestEval:
    def test_pipeline_is_perfect_on_clean_scenes(self, synth_corpus, tmp_path, capsys):
        assert run("baseline", synth_corpus) == 0
        report_dir = tmp_path / "report"
        assert run("eval", synth_corpus, synth_corpus, "-o", report_dir, "--jobs", "2") == 0
        doc = json.loads((report_dir / "report.json").read_text())
        assert doc["aggregate"]["ap"] == 1.0
        assert doc["aggregate"]["p_re"] == 1.0
        assert (report_dir / "report.csv").is_file()
        assert (report_dir / "pr_curve.png").is_file()
        assert "AP=1.0000" in capsys.readouterr().out

    def test_missing_prediction_counts_as_empty(self, synth_corpus, tmp_path, capsys):
        assert run("baseline", synth_corpus) == 0
        (synth_corpus / "clip_0001" / "prediction.json").unlink()
        report_dir = tmp_path / "report"
        assert run("eval", synth_corpus, synth_corpus, "-o", report_dir) == 0
        err = capsys.readouterr().err
        assert "scored as empty" in err
        doc = json.loads((report_dir / "report.json").read_text())
        assert doc["clips"]["clip_0001"]["counts"]["pred_rules"] == 0
        assert doc["clips"]["clip_0001"]["ap"] == 0.0

    def test_matches_manifest_counts(self, tmp_path):
        out = tmp_path / "c"
        assert run(
            "synth", "-o", out, "--clips", "20", "--lanes", "5", "--rules", "4",
            "--seed", "2", "--corrupt", "--drop-rule-p", "0.3",
            "--perturb-property-p", "0.3", "--drop-edge-p", "0.2", "--add-edge-p", "0.5",
        ) == 0
        report_dir = tmp_path / "report"
        assert run("eval", out, out, "-o", report_dir) == 0
        report = json.loads((report_dir / "report.json").read_text())
        manifest = json.loads((out / "manifest.json").read_text())
        separating = manifest["corruption"]["separating_threshold"]
        for entry in manifest["clips"]:
            clip_report = report["clips"][entry["id"]]
            for key, value in entry["expected"].items():
                if key == "subgraph_hits":
                    continue  # stated at the separating threshold, checked below
                assert clip_report["counts"][key] == value, (entry["id"], key)
            # any grid threshold inside the separating band sees exactly the
            # surviving true edges
            point = next(
                pt for pt in clip_report["curve"]
                if separating <= pt["t"] < manifest["corruption"]["c_lo_correct"]
            )
            assert point["pred"] == entry["expected"]["edge_hits"]
            assert point["hits"] == entry["expected"]["subgraph_hits"]

    def test_golden_fixture_through_eval(self, tmp_path):
        clip, labeled, _, pred = synthgen.worked_example_fixture()
        clip_dir = tmp_path / "gt" / "clip_h"
        dataio.save_clip_dir(clip_dir, clip, labeled, prediction=pred)
        report_dir = tmp_path / "report"
        assert run("eval", tmp_path / "gt", tmp_path / "gt", "-o", report_dir) == 0
        doc = json.loads((report_dir / "report.json").read_text())["aggregate"]
        assert (doc["p_re"], doc["r_re"]) == (0.5, 0.6)
        assert (doc["p_cr"], doc["r_cr"]) == (0.6, 0.5)
        assert (doc["p_all"], doc["r_all"]) == (0.2, 1 / 6)

    def test_eval_reruns_byte_identical(self, synth_corpus, tmp_path):
        assert run("baseline", synth_corpus) == 0
        a, b = tmp_path / "a", tmp_path / "b"
        for report_dir in (a, b):
            assert run("eval", synth_corpus, synth_corpus, "-o", report_dir) == 0
        for name in ("report.json", "report.csv", "pr_curve.png"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_config_embedded_in_report(self, synth_corpus, tmp_path):
        report_dir = tmp_path / "report"
        assert run("baseline", synth_corpus) == 0
        assert run("eval", synth_corpus, synth_corpus, "-o", report_dir, "--thresholds", "25") == 0
        doc = json.loads((report_dir / "report.json").read_text())
        assert doc["config"]["threshold_count"] == 25
        assert len(doc["aggregate"]["curve"]) == 25

    def test_missing_dir(self, tmp_path):
        assert run("eval", tmp_path / "a", tmp_path / "b", "-o", tmp_path / "r") == 2


class TestProject:
    def test_first_frame_has_centerline_paths(self, synth_corpus, tmp_path):
        clip_dir = synth_corpus / "clip_0000"
        clip = dataio.parse_clip((clip_dir / "data.json").read_bytes())
        first_ts = sorted(clip.poses)[0]
        out = tmp_path / "overlay.svg"
        assert run("project", clip_dir, first_ts, "-o", out) == 0
        svg = out.read_text()
        assert svg.count('data-vec-type="3"') == 3
        assert "nan" not in svg and "inf" not in svg

    def test_unknown_timestamp(self, synth_corpus, tmp_path):
        assert run("project", synth_corpus / "clip_0000", "12345", "-o", tmp_path / "o.svg") == 1

    def test_pose_facing_away_gives_empty_overlay(self, tmp_path):
        clip, labeled, _ = synthgen.generate_clip(synthgen.SceneConfig(3, 2), 4)
        ts = sorted(clip.poses)[0]
        # keep the forward-facing orientation but move far past the scene,
        # so every vector sits behind the camera
        from mapdr.core import CameraPose, ClipData, Point3
        from mapdr.geometry import rotation_to_quat

        forward = [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
        pose = CameraPose(ts, Point3(500.0, 0.0, 1.6), rotation_to_quat(forward))
        flipped = ClipData(
            sign_quad=clip.sign_quad,
            vectors=clip.vectors,
            intrinsics=clip.intrinsics,
            poses={ts: pose},
        )
        clip_dir = tmp_path / "flipped"
        dataio.save_clip_dir(clip_dir, flipped, labeled)
        out = tmp_path / "o.svg"
        assert run("project", clip_dir, ts, "-o", out) == 0
        assert "<path" not in out.read_text()

    def test_paper_clip_projects_finite(self, tmp_path):
        out = tmp_path / "paper.svg"
        assert run("project", PAPER_CLIP_DIR, "1710907374739989000", "-o", out) == 0
        svg = out.read_text()
        assert "nan" not in svg and "inf" not in svg

    def test_convention_env_override(self, synth_corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("MAPDR_CONVENTIONS", "quaternion_order=wxyz,near_clip=0.5")
        clip_dir = synth_corpus / "clip_0000"
        clip = dataio.parse_clip((clip_dir / "data.json").read_bytes())
        ts = sorted(clip.poses)[0]
        assert run("project", clip_dir, ts, "-o", tmp_path / "o.svg") == 0

    def test_bad_env_override(self, synth_corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("MAPDR_CONVENTIONS", "frobnicate=yes")
        clip_dir = synth_corpus / "clip_0000"
        assert run("project", clip_dir, "1", "-o", tmp_path / "o.svg") == 2
