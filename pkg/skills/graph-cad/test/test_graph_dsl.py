#!/usr/bin/env python3
"""graph_dsl.py 단위 테스트"""
import random
import sys
import unittest
from pathlib import Path

import pytest

# 테스트 대상 모듈 임포트
sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))
from graph_dsl import (
    AlignSpec,
    AutoSize,
    AvgTarget,
    BoxSize,
    ConnectSpec,
    CylinderSize,
    FeatureRef,
    GraphAst,
    GridPattern,
    MaterialDef,
    NodeRecord,
    OffsetPos,
    OrientationDirective,
    PolarPattern,
    PolarPos,
    RotationSpec,
    SphereSize,
    canonical_feature,
    format_number,
    parse_graph,
    parse_materials,
    parse_placement,
    serialize_graph,
)
from graph_errors import (
    DslSyntaxError,
    DuplicateKey,
    DuplicateMaterialName,
    DuplicateNodeId,
    MalformedRgba,
    MissingIdField,
    UnknownDirective,
    UnknownFeatureName,
    UnknownKey,
    UnterminatedBlock,
)

CORPUS = Path(__file__).parent.parent / "corpus"


def _graph(*records: str, materials: str = "") -> str:
    head = f"-- MATERIAL LIBRARY --\n{materials}\n#END_MATERIALS\n" if materials else ""
    return head + "# ----------  BEGIN_GRAPH  ----------\n" + "\n".join(records) + "\n# ----------  END_GRAPH  ----------\n"


class TestParseGraph(unittest.TestCase):
    """BEGIN_GRAPH 블록 파싱 테스트"""

    def test_dining_table_corpus(self):
        """정상 케이스: 식탁 예제 전체 파싱"""
        ast = parse_graph((CORPUS / "dining_table.graph").read_text(encoding="utf-8"))

        self.assertEqual([m.name for m in ast.materials], ["table_wood", "wood_dark"])
        self.assertEqual(ast.materials[0].rgba, (0.6, 0.4, 0.25, 1.0))
        self.assertEqual(len(ast.nodes), 6)
        root = ast.nodes[0]
        self.assertEqual(root.id, "dining_table")
        self.assertIsNone(root.parent)
        self.assertIsInstance(root.size, AutoSize)
        self.assertEqual(root.assembly_order, (("tabletop",), ("leg_fl", "leg_fr", "leg_bl", "leg_br")))
        leg = ast.nodes[2]
        self.assertEqual(leg.size, BoxSize(0.08, 0.08, 0.72))
        self.assertEqual(leg.align[0].this_feature, "top_face")
        self.assertEqual(leg.align[0].target, FeatureRef("tabletop", "bottom_face"))
        self.assertEqual(leg.pos, OffsetPos(-0.96, 0.46, 0.0))
        self.assertEqual(leg.orientation, OrientationDirective("axis", axis="+Z"))

    def test_canonical_text_is_stable(self):
        """정상 케이스: 정규 표기 파일은 직렬화 결과와 바이트 단위로 같다"""
        text = (CORPUS / "dining_table.graph").read_text(encoding="utf-8")

        self.assertEqual(serialize_graph(parse_graph(text)), text)

    def test_corpus_files_parse(self):
        """정상 케이스: 코퍼스의 모든 그래프 파싱"""
        for path in sorted(CORPUS.glob("*.graph")):
            with self.subTest(path=path.name):
                ast = parse_graph(path.read_text(encoding="utf-8"))
                self.assertTrue(ast.nodes)

    def test_missing_keys_default(self):
        """정상 케이스: 생략된 키는 기본값"""
        ast = parse_graph(_graph("L0: id=box | type=Box | size=box(1,1,1)"))

        node = ast.nodes[0]
        self.assertEqual(node.layer, 0)
        self.assertIsNone(node.parent)
        self.assertEqual(node.align, ())
        self.assertIsNone(node.create_method)

    def test_dash_means_absent(self):
        """정상 케이스: '-' 값은 없음과 같다"""
        ast = parse_graph(_graph("L0: id=box | parent=- | size=box(1,2,3) | mat=-"))

        self.assertIsNone(ast.nodes[0].parent)
        self.assertIsNone(ast.nodes[0].mat)

    def test_continuation_lines_join(self):
        """정상 케이스: '|' 로 시작하는 줄은 이전 레코드에 이어 붙는다"""
        ast = parse_graph(_graph("L1: id=a | parent=root", "    | size=box(1,1,1)", "L0: id=root | size=AUTO"))

        self.assertEqual(ast.nodes[0].size, BoxSize(1.0, 1.0, 1.0))
        self.assertEqual(ast.nodes[1].id, "root")

    def test_span_points_at_key(self):
        """정상 케이스: 필드 위치 정보"""
        ast = parse_graph(_graph("L0: id=box", "    | size=box(1,1,1)"))

        span = ast.span("box", "size")
        self.assertEqual((span.line, span.column), (3, 7))

    def test_unknown_key(self):
        """에러 케이스: 알 수 없는 키"""
        with self.assertRaises(UnknownKey) as cm:
            parse_graph(_graph("L0: id=box | colour=red"))
        self.assertEqual(cm.exception.line, 2)

    def test_duplicate_key(self):
        """에러 케이스: 같은 키 반복"""
        with self.assertRaises(DuplicateKey):
            parse_graph(_graph("L0: id=box | size=box(1,1,1) | size=box(2,2,2)"))

    def test_duplicate_node_id(self):
        """에러 케이스: 같은 id 의 레코드 두 개"""
        with self.assertRaises(DuplicateNodeId) as cm:
            parse_graph(_graph("L0: id=a | size=box(1,1,1)", "L0: id=a | size=box(1,1,1)"))
        self.assertEqual(cm.exception.line, 3)

    def test_missing_id(self):
        """에러 케이스: id 없는 레코드"""
        with self.assertRaises(MissingIdField):
            parse_graph(_graph("L0: type=Box | size=box(1,1,1)"))

    def test_unterminated_graph(self):
        """에러 케이스: END_GRAPH 없음"""
        with self.assertRaises(UnterminatedBlock):
            parse_graph("# ----------  BEGIN_GRAPH  ----------\nL0: id=a\n")

    def test_unterminated_materials(self):
        """에러 케이스: #END_MATERIALS 없음"""
        with self.assertRaises(UnterminatedBlock):
            parse_graph("-- MATERIAL LIBRARY --\nwood | diffuse_color=(1,1,1,1)\n")

    def test_missing_graph_block(self):
        """에러 케이스: BEGIN_GRAPH 블록 없음"""
        with self.assertRaises(DslSyntaxError):
            parse_graph("-- MATERIAL LIBRARY --\n#END_MATERIALS\n")

    def test_text_outside_blocks(self):
        """에러 케이스: 블록 밖의 일반 텍스트"""
        with self.assertRaises(DslSyntaxError) as cm:
            parse_graph("hello\n" + _graph("L0: id=a"))
        self.assertEqual((cm.exception.line, cm.exception.column), (1, 1))


class TestParseMaterials(unittest.TestCase):
    """MATERIAL LIBRARY 파싱 테스트"""

    def test_parse(self):
        """정상 케이스: 재질 두 개"""
        mats = parse_materials("oak | diffuse_color=(0.5,0.3,0.1,1)\n# note\nsteel | diffuse_color=(0.7, 0.7, 0.7, 1)")

        self.assertEqual(mats, [MaterialDef("oak", (0.5, 0.3, 0.1, 1.0)), MaterialDef("steel", (0.7, 0.7, 0.7, 1.0))])

    def test_three_channels(self):
        """에러 케이스: 채널 수 부족"""
        with self.assertRaises(MalformedRgba):
            parse_materials("oak | diffuse_color=(0.5,0.3,0.1)")

    def test_channel_out_of_range(self):
        """에러 케이스: [0,1] 밖의 채널"""
        with self.assertRaises(MalformedRgba):
            parse_materials("oak | diffuse_color=(1.5,0.3,0.1,1)")

    def test_duplicate_name(self):
        """에러 케이스: 같은 이름의 재질"""
        with self.assertRaises(DuplicateMaterialName) as cm:
            parse_materials("oak | diffuse_color=(1,1,1,1)\noak | diffuse_color=(0,0,0,1)", first_line=5)
        self.assertEqual(cm.exception.line, 6)


class TestParsePlacement(unittest.TestCase):
    """배치 표현식 파싱 테스트"""

    def test_align_default_axes(self):
        """정상 케이스: 축 생략 시 XYZ"""
        spec = parse_placement("Align leg.top_face to tabletop.bottom_face")

        self.assertEqual(spec, AlignSpec(("X", "Y", "Z"), "leg", "top_face", FeatureRef("tabletop", "bottom_face")))

    def test_align_axes_sorted(self):
        """정상 케이스: 축 목록은 XYZ 순으로 정규화"""
        spec = parse_placement("Align(Z,X) knob.center to door.front")

        self.assertEqual(spec.axes, ("X", "Z"))

    def test_align_avg_and_selectors(self):
        """정상 케이스: Avg(...) 와 [*], [k] 선택자"""
        spec = parse_placement("Align shelf.bottom to Avg(post[*].top, post[2].top)")

        self.assertIsInstance(spec.target, AvgTarget)
        self.assertEqual(spec.target.refs[0].selector, "*")
        self.assertEqual(spec.target.refs[1].selector, 2)

    def test_offset_and_tuple(self):
        """정상 케이스: offset(...) 과 괄호 튜플 표기"""
        self.assertEqual(parse_placement("pos=offset(1, -2, 0.5)"), OffsetPos(1.0, -2.0, 0.5))
        self.assertEqual(parse_placement("(1,2,3)"), OffsetPos(1.0, 2.0, 3.0))

    def test_polar(self):
        """정상 케이스: polar(θ; dr=Δ)"""
        self.assertEqual(parse_placement("polar(45; dr=0.3)"), PolarPos(45.0, 0.3))

    def test_connect(self):
        """정상 케이스: A.f + B.f"""
        spec = parse_placement("connect=seat.left + back.bottom")

        self.assertEqual(spec, ConnectSpec(FeatureRef("seat", "left"), FeatureRef("back", "bottom")))

    def test_orientation_families(self):
        """정상 케이스: orientation 지시자 계열"""
        cases = {
            "axis:-X": OrientationDirective("axis", axis="-X"),
            "axis:radial_from hub": OrientationDirective("radial_from", target="hub"),
            "axis:tangent_to hub": OrientationDirective("tangent_to", target="hub"),
            "normal:wall": OrientationDirective("normal_to", target="wall", face="+Z_face"),
            "-Y_face:normal_to wall": OrientationDirective("normal_to", target="wall", face="-Y_face"),
            "+Z_face:align lid.-Z_face": OrientationDirective(
                "face_align", target="lid", face="+Z_face", target_face="-Z_face"
            ),
        }
        for text, expected in cases.items():
            with self.subTest(text=text):
                self.assertEqual(parse_placement(f"orientation={text}"), expected)

    def test_rotation(self):
        """정상 케이스: euler / spin / tilt"""
        self.assertEqual(parse_placement("euler(0, 90, 0)"), RotationSpec(0.0, 90.0, 0.0))
        self.assertEqual(parse_placement("rotation=spin:30"), RotationSpec(0.0, 0.0, 30.0))
        self.assertEqual(parse_placement("rotation=tilt:15"), RotationSpec(15.0, 0.0, 0.0))

    def test_patterns(self):
        """정상 케이스: grid / polar 패턴"""
        grid = parse_placement("grid(rows:2, cols:3, x_spacing:0.3, y_spacing:0.2, start_offset:(-0.3,-0.15))")
        polar = parse_placement("polar(count:6, radius:0.35)")

        self.assertEqual(grid, GridPattern(2, 3, 0.3, 0.2, (-0.3, -0.15)))
        self.assertEqual(grid.count, 6)
        self.assertEqual(polar, PolarPattern(6, 0.35, 0.0, 60.0))

    def test_unknown_feature(self):
        """에러 케이스: 알 수 없는 피처 이름"""
        with self.assertRaises(UnknownFeatureName):
            parse_placement("Align a.side_face to b.top")

    def test_unknown_directive(self):
        """에러 케이스: 지원하지 않는 배치 함수"""
        with self.assertRaises(UnknownDirective):
            parse_placement("pos=spiral(1, 2)")

    def test_bad_arity(self):
        """에러 케이스: offset 인자 개수 오류"""
        with self.assertRaises(DslSyntaxError) as cm:
            parse_placement("offset(1, 2)")
        self.assertEqual((cm.exception.line, cm.exception.column), (1, 1))


class TestHelpers:
    """정규화 헬퍼 (pytest 스타일)"""

    @pytest.mark.parametrize(
        "token,expected",
        [("top_face", "top"), ("+Z", "top"), ("-y", "back"), ("center", "center"), ("side", None)],
    )
    def test_canonical_feature(self, token, expected):
        """정상 케이스: 피처 토큰 정규화"""
        assert canonical_feature(token) == expected

    @pytest.mark.parametrize("value,expected", [(2.0, "2"), (-0.0, "0"), (0.1, "0.1"), (1e-7, "1e-07")])
    def test_format_number(self, value, expected):
        """정상 케이스: 최단 왕복 표기"""
        assert format_number(value) == expected


def _random_record(rng: random.Random, index: int, ids: list[str]) -> NodeRecord:
    def num() -> float:
        return rng.choice([0.0, 1.0, -2.5, round(rng.uniform(-5, 5), rng.randint(0, 6)), rng.uniform(0.01, 3)])

    size = rng.choice([
        BoxSize(abs(num()) + 0.1, abs(num()) + 0.1, abs(num()) + 0.1),
        CylinderSize(abs(num()) + 0.1, abs(num()) + 0.1, rng.choice(["cylinder", "cone", "disc"])),
        SphereSize(abs(num()) + 0.1, rng.choice(["sphere", "hemisphere"])),
        AutoSize(),
        None,
    ])
    nid = f"n{index}"
    fields: dict = {"id": nid, "layer": rng.randint(0, 4), "size": size}
    if ids and rng.random() < 0.7:
        fields["parent"] = rng.choice(ids)
    if rng.random() < 0.5:
        fields["node_type"] = rng.choice(["Leg", "Panel", "Bolt"])
    if ids and rng.random() < 0.4:
        target = FeatureRef(rng.choice(ids), rng.choice(["top", "bottom_face", "center", "+X"]),
                            rng.choice([None, "*", rng.randint(0, 3)]))
        fields["align"] = (AlignSpec(rng.choice([("X", "Y", "Z"), ("Z",), ("X", "Y")]), nid, "bottom", target),)
    roll = rng.random()
    if roll < 0.4:
        fields["pos"] = OffsetPos(num(), num(), num())
    elif roll < 0.6:
        fields["pos"] = PolarPos(num(), num())
    elif ids and roll < 0.7:
        fields["connect"] = ConnectSpec(FeatureRef(rng.choice(ids), "top"), FeatureRef(rng.choice(ids), "left"))
    if rng.random() < 0.4:
        fields["orientation"] = rng.choice([
            OrientationDirective("axis", axis=rng.choice(["+X", "-Y", "+Z"])),
            OrientationDirective("radial_from", target="hub"),
            OrientationDirective("normal_to", target="wall", face="+Z_face"),
            OrientationDirective("face_align", target="lid", face="-X_face", target_face="+Y_face"),
        ])
    if rng.random() < 0.3:
        fields["rotation"] = RotationSpec(num(), num(), num())
    if rng.random() < 0.3:
        fields["mat"] = "oak"
    if rng.random() < 0.3:
        fields["create_method"] = rng.choice(["primitive", "group", "boolean_subtract"])
    if ids and rng.random() < 0.2:
        fields["after"] = (rng.choice(ids),)
    if rng.random() < 0.2:
        fields["pattern"] = rng.choice([
            GridPattern(rng.randint(1, 4), rng.randint(1, 4), abs(num()), abs(num()), (num(), num())),
            PolarPattern(rng.randint(1, 8), abs(num()), num(), rng.choice([30.0, 45.0])),
        ])
    return NodeRecord(**fields)


class TestCanonicalFuzz(unittest.TestCase):
    """시드 고정 무작위 그래프의 직렬화/파싱 안정성"""

    def test_seeded_graphs(self):
        """정상 케이스: 1000개 무작위 그래프가 정규 텍스트를 거쳐 같은 AST 로 돌아온다"""
        rng = random.Random(20240521)
        for case in range(1000):
            ids: list[str] = []
            nodes = []
            for index in range(rng.randint(1, 6)):
                nodes.append(_random_record(rng, index, ids))
                ids.append(nodes[-1].id)
            materials = (MaterialDef("oak", (0.5, 0.25, 0.125, 1.0)),) if rng.random() < 0.5 else ()
            ast = GraphAst(materials, tuple(nodes))
            text = serialize_graph(ast)
            with self.subTest(case=case):
                again = parse_graph(text)
                self.assertEqual(again, ast)
                self.assertEqual(serialize_graph(again), text)


if __name__ == "__main__":
    unittest.main()
