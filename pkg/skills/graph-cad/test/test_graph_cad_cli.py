#!/usr/bin/env python3
"""graph_cad_cli.py 단위 테스트"""
import json
import sys
from pathlib import Path

import pytest

# 테스트 대상 모듈 임포트
sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))
from eval_config import CONFIG_ENV
from graph_cad_cli import build_parser, run_command

CORPUS = Path(__file__).parent.parent / "corpus"
GOLDEN = Path(__file__).parent / "golden"
DINING = CORPUS / "dining_table.graph"
CONSTRAINTS = CORPUS / "dining_table.constraints.json"


@pytest.fixture(autouse=True)
def _no_env_config(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)


def _json_out(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestParser:
    """인자 파서 테스트"""

    def test_subcommands(self):
        """정상 케이스: eval 하위 명령"""
        args = build_parser().parse_args(["eval", "gcs", "--graph", "a.graph", "--constraints", "c.json"])

        assert args.metric == "gcs"
        assert args.workers == 1

    @pytest.mark.parametrize("argv", [
        [],
        ["explode", "a.graph"],
        ["eval", "gcs", "--constraints", "c.json"],
        ["eval", "nla", "--gt", "a.graph"],
    ])
    def test_usage_errors(self, argv):
        """에러 케이스: 사용법 오류는 종료 코드 2"""
        assert run_command(argv) == 2


class TestGraphCommands:
    """parse / check / compile 명령"""

    def test_parse_is_canonical(self, capsys):
        """정상 케이스: 정규화 텍스트 = 원본 (이미 정규형)"""
        assert run_command(["parse", str(DINING)]) == 0
        assert capsys.readouterr().out == DINING.read_text(encoding="utf-8")

    def test_check_ok(self, capsys):
        """정상 케이스: 검증 통과 리포트"""
        assert run_command(["check", str(CORPUS / "wheel_hub.graph")]) == 0

        report = _json_out(capsys)
        assert report["ok"] is True
        assert report["patterns"]["spoke"] == [f"spoke[{k}]" for k in range(6)]

    def test_check_diagnostics(self, tmp_path, capsys):
        """에러 케이스: 진단 JSON 과 종료 코드 1"""
        bad = tmp_path / "bad.graph"
        bad.write_text(
            "# ----------  BEGIN_GRAPH  ----------\n"
            "L0: id=a | size=box(1,1,1) | mat=gold\n"
            "# ----------  END_GRAPH  ----------\n",
            encoding="utf-8",
        )

        assert run_command(["check", str(bad)]) == 1
        report = _json_out(capsys)
        assert report["ok"] is False
        assert report["diagnostics"][0]["code"] == "DanglingReference"
        assert report["diagnostics"][0]["line"] == 2

    def test_missing_file(self, tmp_path, capsys):
        """에러 케이스: 없는 입력 파일"""
        assert run_command(["check", str(tmp_path / "none.graph")]) == 1
        assert "[ERROR] file not found" in capsys.readouterr().err

    def test_compile(self, tmp_path, capsys):
        """정상 케이스: 산출물 4종과 골든 스크립트"""
        assert run_command(["compile", str(DINING), "--out-dir", str(tmp_path)]) == 0

        artifacts = _json_out(capsys)["artifacts"]
        assert sorted(artifacts) == ["actions", "graph", "scene", "script"]
        assert (tmp_path / "dining_table.bpy.py").read_text(encoding="utf-8") == \
            (GOLDEN / "dining_table.bpy.py").read_text(encoding="utf-8")
        assert (tmp_path / "dining_table.actions.txt").read_text(encoding="utf-8") == \
            (GOLDEN / "dining_table.actions.txt").read_text(encoding="utf-8")
        assert json.loads((tmp_path / "dining_table.scene.json").read_text(encoding="utf-8"))["instances"]

    def test_unsupported_dialect(self, capsys):
        """에러 케이스: 지원하지 않는 방언"""
        assert run_command(["emit", str(DINING), "--dialect", "onshape"]) == 1
        assert _json_out(capsys)["diagnostics"][0]["code"] == "UnsupportedDialect"


class TestEvalCommands:
    """eval 명령"""

    def test_gcs_from_graph(self, capsys):
        """정상 케이스: 식탁 GCS 1.0"""
        assert run_command(["eval", "gcs", "--graph", str(DINING), "--constraints", str(CONSTRAINTS)]) == 0

        report = _json_out(capsys)
        assert report["corpus"]["mean"] == 1.0
        assert report["samples"][0]["status"] == "ok"

    def test_gcs_from_scene(self, tmp_path, capsys):
        """정상 케이스: resolve 로 내보낸 장면 JSON 으로 평가"""
        scene = tmp_path / "dining_table.scene.json"
        assert run_command(["resolve", str(DINING), "--out", str(scene)]) == 0
        capsys.readouterr()

        assert run_command(["eval", "gcs", "--scene", str(scene), "--constraints", str(CONSTRAINTS)]) == 0
        assert _json_out(capsys)["corpus"]["mean"] == 1.0

    def test_hla_identical(self, capsys):
        """정상 케이스: 같은 그래프 HLA 1"""
        assert run_command(["eval", "hla", "--gt", str(DINING), "--pred", str(DINING), "--alpha", "0.5"]) == 0

        report = _json_out(capsys)
        assert report["samples"][0]["hla"] == 1.0
        assert report["config"]["hla"]["alpha"] == 0.5

    def test_nla_weight_flag(self, tmp_path, capsys):
        """정상 케이스: --w-a 1 이면 재질 불일치 하나가 1/5"""
        pred = tmp_path / "dining_table.graph"
        pred.write_text(DINING.read_text(encoding="utf-8").replace("mat=table_wood", "mat=wood_dark"), encoding="utf-8")

        assert run_command(["eval", "nla", "--gt", str(DINING), "--pred", str(pred), "--w-a", "1"]) == 0
        assert _json_out(capsys)["samples"][0]["score"] == pytest.approx(0.2)

    def test_nla_directories(self, tmp_path, capsys):
        """정상 케이스: 디렉터리 쌍은 같은 stem 끼리 평가"""
        gt_dir, pred_dir = tmp_path / "gt", tmp_path / "pred"
        gt_dir.mkdir()
        pred_dir.mkdir()
        for name in ("dining_table.graph", "wheel_hub.graph"):
            text = (CORPUS / name).read_text(encoding="utf-8")
            (gt_dir / name).write_text(text, encoding="utf-8")
            (pred_dir / name).write_text(text, encoding="utf-8")

        assert run_command(["eval", "nla", "--gt", str(gt_dir), "--pred", str(pred_dir), "--workers", "2"]) == 0
        report = _json_out(capsys)
        assert [s["sample"] for s in report["samples"]] == ["dining_table", "wheel_hub"]
        assert report["corpus"] == {"mean": 0.0, "count": 2}

    def test_config_file(self, tmp_path, capsys):
        """정상 케이스: --config 로 α 지정"""
        config = tmp_path / "eval.yaml"
        config.write_text("hla:\n  alpha: 0.25\n", encoding="utf-8")

        assert run_command(["--config", str(config), "eval", "hla", "--gt", str(DINING), "--pred", str(DINING)]) == 0
        assert _json_out(capsys)["config"]["hla"]["alpha"] == 0.25

    def test_bad_config(self, tmp_path, capsys):
        """에러 케이스: 설정 파일의 알 수 없는 키"""
        config = tmp_path / "eval.yaml"
        config.write_text("weights:\n  w_size: 1\n", encoding="utf-8")

        assert run_command(["--config", str(config), "eval", "hla", "--gt", str(DINING), "--pred", str(DINING)]) == 1
        assert _json_out(capsys)["diagnostics"][0]["code"] == "InvalidConfig"


class TestCurriculumCommand:
    """curriculum run 명령"""

    def test_mock_run(self, tmp_path, capsys):
        """정상 케이스: mock 스크립트 실행 리포트"""
        out = tmp_path / "report.json"

        assert run_command(["curriculum", "run", "--mock", str(CORPUS / "mock_curriculum.json"), "--out", str(out)]) == 0
        report = json.loads(out.read_text(encoding="utf-8"))
        assert report["final_dataset_size"] == 42
        assert len(report["iterations"]) == 3

    def test_bad_json(self, tmp_path, capsys):
        """에러 케이스: 깨진 mock 스크립트"""
        bad = tmp_path / "mock.json"
        bad.write_text("{", encoding="utf-8")

        assert run_command(["curriculum", "run", "--mock", str(bad)]) == 1
        assert "[ERROR] invalid JSON" in capsys.readouterr().err
