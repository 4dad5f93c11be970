#!/usr/bin/env python3
"""Graph-CAD CLI - 분해 그래프 파싱/검증/배치/스크립트 생성/평가 유틸리티

종료 코드: 0 성공, 1 도메인 에러(진단 JSON 출력), 2 사용법 에러
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

from curriculum import run_mock
from emitter import emit_actions, emit_script
from eval_config import EvalConfig, load_eval_config
from graph_core import ValidatedGraph, expand_patterns, validate
from graph_dsl import GraphAst, parse_graph, serialize_graph
from graph_errors import GraphCadError, diagnostics_report
from metrics import (
    AliasMapping,
    corpus_mean,
    gcs_eval,
    hla,
    load_constraints,
    nla,
)
from planner import plan
from resolver import ResolvedScene, resolve_scene, scene_from_json, scene_to_json

logger = logging.getLogger("graph_cad")

GRAPH_SUFFIX = ".graph"
SCENE_SUFFIX = ".scene.json"
CONSTRAINTS_SUFFIX = ".constraints.json"


def _read_text(path: str | Path) -> str:
    p = Path(path)
    if not p.is_file():
        raise SystemExit(f"[ERROR] file not found: {p}")
    return p.read_text(encoding="utf-8")


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise SystemExit(f"[ERROR] invalid JSON in {path}: {e}")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _print_json(data: Any, out: str | None = None) -> None:
    _emit(json.dumps(data, ensure_ascii=False, indent=2) + "\n", out)


def _load_graph(path: str | Path) -> ValidatedGraph:
    return expand_patterns(validate(parse_graph(_read_text(path))))


def _stem(path: Path, suffix: str) -> str:
    name = path.name
    return name[: -len(suffix)] if name.endswith(suffix) else path.stem


def _config(args: argparse.Namespace) -> EvalConfig:
    config = load_eval_config(getattr(args, "config", None))
    return config.with_overrides(
        alpha=getattr(args, "alpha", None),
        w_s=getattr(args, "w_s", None),
        w_p=getattr(args, "w_p", None),
        w_o=getattr(args, "w_o", None),
        w_a=getattr(args, "w_a", None),
        gamma=getattr(args, "gamma", None),
    )


# parse / check 명령


def cmd_parse(args: argparse.Namespace) -> None:
    """그래프 텍스트 -> 정규화 텍스트"""
    ast: GraphAst = parse_graph(_read_text(args.graph))
    _emit(serialize_graph(ast), args.out)


def cmd_check(args: argparse.Namespace) -> None:
    """파싱 + 의미 검증 + 패턴 전개"""
    graph = _load_graph(args.graph)
    report = diagnostics_report([])
    report["nodes"] = len(graph.nodes)
    report["patterns"] = {tid: list(exp.instance_ids) for tid, exp in graph.expanded_instances.items()}
    _print_json(report)


# resolve / plan / emit / compile 명령


def cmd_resolve(args: argparse.Namespace) -> None:
    scene = resolve_scene(_load_graph(args.graph))
    _print_json(scene_to_json(scene), args.out)


def cmd_plan(args: argparse.Namespace) -> None:
    _emit(emit_actions(plan(_load_graph(args.graph))), args.out)


def cmd_emit(args: argparse.Namespace) -> None:
    _emit(emit_script(plan(_load_graph(args.graph)), args.dialect), args.out)


def compile_graph(graph_path: str | Path, out_dir: str | Path) -> dict[str, str]:
    """전체 파이프라인: 정규화 그래프, 장면 JSON, 액션 텍스트, bpy 스크립트"""
    text = _read_text(graph_path)
    ast = parse_graph(text)
    graph = expand_patterns(validate(ast))
    scene = resolve_scene(graph)
    action_plan = plan(graph, scene)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = _stem(Path(graph_path), GRAPH_SUFFIX)
    artifacts = {
        "graph": (out / f"{stem}.graph.txt", serialize_graph(ast)),
        "scene": (out / f"{stem}{SCENE_SUFFIX}", json.dumps(scene_to_json(scene), ensure_ascii=False, indent=2) + "\n"),
        "actions": (out / f"{stem}.actions.txt", emit_actions(action_plan)),
        "script": (out / f"{stem}.bpy.py", emit_script(action_plan, "bpy")),
    }
    for path, content in artifacts.values():
        path.write_text(content, encoding="utf-8")
        logger.info("wrote %s", path)
    return {key: str(path) for key, (path, _) in artifacts.items()}


def cmd_compile(args: argparse.Namespace) -> None:
    _print_json({"artifacts": compile_graph(args.graph, args.out_dir)})


# eval 명령


def _pairs(gt: str, pred: str, suffix: str, pred_suffix: str | None = None) -> list[tuple[str, Path, Path]]:
    """파일 두 개 또는 디렉터리 두 개(같은 stem 끼리) -> (sample, gt, pred) 목록"""
    gt_path, pred_path = Path(gt), Path(pred)
    pred_suffix = pred_suffix or suffix
    if gt_path.is_dir() != pred_path.is_dir():
        raise SystemExit("[ERROR] both inputs must be files or both directories")
    if not gt_path.is_dir():
        return [(_stem(gt_path, suffix), gt_path, pred_path)]
    pairs = []
    for g in sorted(gt_path.glob(f"*{suffix}")):
        stem = _stem(g, suffix)
        p = pred_path / f"{stem}{pred_suffix}"
        if p.is_file():
            pairs.append((stem, g, p))
        else:
            logger.warning("no counterpart for %s in %s", g.name, pred_path)
    if not pairs:
        raise SystemExit(f"[ERROR] no matching samples in {gt_path} and {pred_path}")
    return pairs


def _fan_out(fn: Callable[[tuple], dict[str, Any]], items: Sequence[tuple], workers: int) -> list[dict[str, Any]]:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _mapping(args: argparse.Namespace, gt_graph: ValidatedGraph) -> AliasMapping | None:
    if not args.mapping:
        return None
    return AliasMapping.from_json(_read_json(args.mapping), gt_graph.nodes)


def cmd_eval_nla(args: argparse.Namespace) -> None:
    config = _config(args)

    def one(item: tuple) -> dict[str, Any]:
        sample, gt_path, pred_path = item
        gt_graph = _load_graph(gt_path)
        result = nla(gt_graph, _load_graph(pred_path), _mapping(args, gt_graph), config.weights)
        return {"sample": sample, **result.to_dict()}

    samples = _fan_out(one, _pairs(args.gt, args.pred, GRAPH_SUFFIX), args.workers)
    _print_json({
        "metric": "nla",
        "samples": samples,
        "corpus": {"mean": corpus_mean(s["score"] for s in samples), "count": len(samples)},
        "config": config.to_dict(),
    }, args.out)


def cmd_eval_hla(args: argparse.Namespace) -> None:
    config = _config(args)

    def one(item: tuple) -> dict[str, Any]:
        sample, gt_path, pred_path = item
        gt_graph = _load_graph(gt_path)
        result = hla(gt_graph, _load_graph(pred_path), _mapping(args, gt_graph), config.hla)
        return {"sample": sample, **result.to_dict()}

    samples = _fan_out(one, _pairs(args.gt, args.pred, GRAPH_SUFFIX), args.workers)
    _print_json({
        "metric": "hla",
        "samples": samples,
        "corpus": {
            "hla": corpus_mean(s["hla"] for s in samples),
            "edge_f1": corpus_mean(s["edge_f1"] for s in samples),
            "depth_score": corpus_mean(s["depth_score"] for s in samples),
            "count": len(samples),
        },
        "config": config.to_dict(),
    }, args.out)


def _scene_for(path: Path) -> ResolvedScene:
    if path.name.endswith(GRAPH_SUFFIX):
        return resolve_scene(_load_graph(path))
    return scene_from_json(_read_json(path))


def cmd_eval_gcs(args: argparse.Namespace) -> None:
    config = _config(args)
    scene_arg = args.scene or args.graph
    suffix = GRAPH_SUFFIX if args.graph else SCENE_SUFFIX

    def one(item: tuple) -> dict[str, Any]:
        sample, scene_path, constraints_path = item
        result = gcs_eval(
            _scene_for(scene_path), load_constraints(_read_json(constraints_path)), tolerances=config.gcs
        )
        return {"sample": sample, **result.to_dict()}

    samples = _fan_out(one, _pairs(scene_arg, args.constraints, suffix, CONSTRAINTS_SUFFIX), args.workers)
    _print_json({
        "metric": "gcs",
        "samples": samples,
        "corpus": {
            "mean": corpus_mean(s["score"] for s in samples),
            "scored": sum(1 for s in samples if s["score"] is not None),
            "count": len(samples),
        },
        "config": config.to_dict(),
    }, args.out)


# curriculum 명령


def cmd_curriculum_run(args: argparse.Namespace) -> None:
    script = _read_json(args.mock)
    if args.workers:
        script = {**script, "config": {**(script.get("config") or {}), "workers": args.workers}}
    _print_json(run_mock(script, args.seed), args.out)


def _add_weight_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-s", dest="w_s", type=float, help="크기 가중치")
    p.add_argument("--w-p", dest="w_p", type=float, help="위치 가중치")
    p.add_argument("--w-o", dest="w_o", type=float, help="방향 가중치")
    p.add_argument("--w-a", dest="w_a", type=float, help="재질 가중치")
    p.add_argument("--gamma", type=float, help="재질 불일치 벌점")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graph_cad_cli.py",
        description="Graph-CAD CLI - 분해 그래프 기반 CAD 스크립트 생성 및 평가",
    )
    parser.add_argument("--config", help="평가 설정 파일 (YAML/JSON, 기본: $GRAPH_CAD_CONFIG)")
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG 로그 출력")
    sub = parser.add_subparsers(dest="cmd", required=True)

    # parse 명령
    p = sub.add_parser("parse", help="그래프 파싱 후 정규화 텍스트 출력")
    p.add_argument("graph", help="그래프 파일")
    p.add_argument("--out", help="출력 파일 (기본: stdout)")
    p.set_defaults(func=cmd_parse)

    # check 명령
    p = sub.add_parser("check", help="그래프 의미 검증")
    p.add_argument("graph", help="그래프 파일")
    p.set_defaults(func=cmd_check)

    # resolve 명령
    p = sub.add_parser("resolve", help="배치 해석 -> 장면 JSON")
    p.add_argument("graph", help="그래프 파일")
    p.add_argument("--out", help="출력 파일 (기본: stdout)")
    p.set_defaults(func=cmd_resolve)

    # plan 명령
    p = sub.add_parser("plan", help="액션 스크립트 텍스트 생성")
    p.add_argument("graph", help="그래프 파일")
    p.add_argument("--out", help="출력 파일 (기본: stdout)")
    p.set_defaults(func=cmd_plan)

    # emit 명령
    p = sub.add_parser("emit", help="실행 스크립트 텍스트 생성")
    p.add_argument("graph", help="그래프 파일")
    p.add_argument("--dialect", default="bpy", help="스크립트 방언 (bpy)")
    p.add_argument("--out", help="출력 파일 (기본: stdout)")
    p.set_defaults(func=cmd_emit)

    # compile 명령
    p = sub.add_parser("compile", help="전체 파이프라인 실행 후 산출물 4종 저장")
    p.add_argument("graph", help="그래프 파일")
    p.add_argument("--out-dir", default=".", help="산출물 디렉터리")
    p.set_defaults(func=cmd_compile)

    # eval 명령
    ev = sub.add_parser("eval", help="NLA / HLA / GCS 평가")
    ev_sub = ev.add_subparsers(dest="metric", required=True)

    p = ev_sub.add_parser("nla", help="노드 수준 정합도 (낮을수록 좋음)")
    p.add_argument("--gt", required=True, help="GT 그래프 파일 또는 디렉터리")
    p.add_argument("--pred", required=True, help="예측 그래프 파일 또는 디렉터리")
    p.add_argument("--mapping", help="pred_id -> gt_id 매핑 JSON")
    _add_weight_flags(p)
    p.add_argument("--workers", type=int, default=1, help="샘플 병렬 처리 수")
    p.add_argument("--out", help="리포트 파일 (기본: stdout)")
    p.set_defaults(func=cmd_eval_nla)

    p = ev_sub.add_parser("hla", help="계층 수준 정합도")
    p.add_argument("--gt", required=True, help="GT 그래프 파일 또는 디렉터리")
    p.add_argument("--pred", required=True, help="예측 그래프 파일 또는 디렉터리")
    p.add_argument("--mapping", help="pred_id -> gt_id 매핑 JSON")
    p.add_argument("--alpha", type=float, help="EdgeF1 가중치 α")
    p.add_argument("--workers", type=int, default=1, help="샘플 병렬 처리 수")
    p.add_argument("--out", help="리포트 파일 (기본: stdout)")
    p.set_defaults(func=cmd_eval_hla)

    p = ev_sub.add_parser("gcs", help="기하 제약 만족도")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="장면 JSON 파일 또는 디렉터리")
    src.add_argument("--graph", help="그래프 파일 또는 디렉터리 (해석 후 평가)")
    p.add_argument("--constraints", required=True, help="제약 JSON 파일 또는 디렉터리")
    p.add_argument("--workers", type=int, default=1, help="샘플 병렬 처리 수")
    p.add_argument("--out", help="리포트 파일 (기본: stdout)")
    p.set_defaults(func=cmd_eval_gcs)

    # curriculum 명령
    cur = sub.add_parser("curriculum", help="커리큘럼 루프")
    cur_sub = cur.add_subparsers(dest="action", required=True)
    p = cur_sub.add_parser("run", help="mock 프로바이더로 루프 실행")
    p.add_argument("--mock", required=True, help="mock 스크립트 JSON")
    p.add_argument("--seed", type=int, help="난수 시드 (스크립트 값 덮어쓰기)")
    p.add_argument("--workers", type=int, help="시드 탐색 병렬 처리 수")
    p.add_argument("--out", help="리포트 파일 (기본: stdout)")
    p.set_defaults(func=cmd_curriculum_run)

    return parser


def run_command(argv: Sequence[str]) -> int:
    """CLI 실행 후 종료 코드 반환"""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="[%(levelname)s] %(message)s",
        force=True,
    )
    try:
        args.func(args)
    except GraphCadError as exc:
        print(json.dumps(diagnostics_report(exc), ensure_ascii=False, indent=2))
        print(f"[ERROR] {exc}", file=sys.stderr)
        return 1
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return 1
        return int(e.code or 0)
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
