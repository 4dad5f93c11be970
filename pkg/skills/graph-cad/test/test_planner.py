#!/usr/bin/env python3
"""planner.py 단위 테스트"""
import sys
import unittest
from pathlib import Path

import numpy as np

# 테스트 대상 모듈 임포트
sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))
from graph_core import load_graph
from planner import Verb, object_name, plan
from resolver import resolve_scene

CORPUS = Path(__file__).parent.parent / "corpus"


def _plan(name: str):
    return plan(load_graph((CORPUS / name).read_text(encoding="utf-8")))


def _graph(*records: str) -> str:
    return "# ----------  BEGIN_GRAPH  ----------\n" + "\n".join(records) + "\n# ----------  END_GRAPH  ----------\n"


class TestPlanBlocks(unittest.TestCase):
    """3-블록 구성 테스트"""

    @classmethod
    def setUpClass(cls):
        cls.plan = _plan("dining_table.graph")

    def test_block0(self):
        """정상 케이스: 장면 초기화 후 단위 설정"""
        self.assertEqual([s.verb for s in self.plan.block0], [Verb.RESET_SCENE, Verb.SET_UNITS])
        self.assertEqual(self.plan.block0[1].args["unit"], "metres")

    def test_block1_materials(self):
        """정상 케이스: 재질 정의는 라이브러리 순서"""
        self.assertEqual([(s.verb, s.target) for s in self.plan.block1], [
            (Verb.DEFINE_MATERIAL, "table_wood"),
            (Verb.DEFINE_MATERIAL, "wood_dark"),
        ])
        self.assertEqual(self.plan.block1[0].args["rgba"], (0.6, 0.4, 0.25, 1.0))

    def test_sections(self):
        """정상 케이스: 섹션 번호와 제목"""
        headings = [(s.number, s.heading) for s in self.plan.block2]

        self.assertEqual(headings, [
            (1, "Create tabletop"),
            (2, "Attach leg_fl, leg_fr, leg_bl (+1 more)"),
            (3, "Complete dining_table assembly"),
        ])
        self.assertEqual(self.plan.block2[0].closing, "Stage 1 complete.")

    def test_leg_step_order(self):
        """정상 케이스: Create < Rotate < Align < Offset < AssignMaterial"""
        steps = self.plan.steps_for("leg_fl")

        self.assertEqual([s.verb for s in steps], [
            Verb.CREATE, Verb.ROTATE, Verb.ALIGN, Verb.OFFSET, Verb.ASSIGN_MATERIAL,
        ])
        align = steps[2].args
        self.assertEqual(align["points"], (("tabletop", "bottom"),))
        self.assertEqual(align["this"], "top")
        self.assertEqual(align["text"], "Align leg_fl.top_face to tabletop.bottom_face")
        self.assertEqual(steps[3].args["vector"], (-0.96, 0.46, 0.0))
        self.assertEqual(steps[3].args["reference"], "tabletop")
        self.assertTrue(steps[3].args["axis_aligned"])

    def test_anchor_without_align(self):
        """정상 케이스: align 이 없으면 월드 원점에 고정 후 offset"""
        steps = self.plan.steps_for("tabletop")

        self.assertEqual([s.verb for s in steps][:4], [Verb.CREATE, Verb.ROTATE, Verb.ANCHOR, Verb.OFFSET])
        self.assertEqual(steps[0].args, {"kind": "cube", "dims": (2.0, 1.0, 0.04)})
        self.assertIsNone(steps[3].args["reference"])

    def test_validate_section(self):
        """정상 케이스: 제약 문장은 Validate 스텝 하나"""
        steps = self.plan.block2[-1].steps

        self.assertEqual(len(steps), 1)
        self.assertEqual(steps[0].verb, Verb.VALIDATE)
        self.assertTrue(steps[0].args["text"].startswith("that all legs"))

    def test_no_section_for_auto_root(self):
        """정상 케이스: AUTO 그룹 자체는 생성 스텝이 없다"""
        self.assertEqual(self.plan.steps_for("dining_table")[0].verb, Verb.VALIDATE)


class TestPatternsAndBooleans(unittest.TestCase):
    """패턴 / boolean 계획 테스트"""

    @classmethod
    def setUpClass(cls):
        cls.plan = _plan("wheel_hub.graph")

    def test_repeat_for_polar_pattern(self):
        """정상 케이스: 완전한 패턴 묶음은 Repeat 하나"""
        section = self.plan.block2[2]
        repeat = section.steps[0]

        self.assertEqual(section.heading, "Create spoke")
        self.assertEqual(len(section.steps), 1)
        self.assertEqual(repeat.verb, Verb.REPEAT)
        self.assertEqual(repeat.args["count"], 6)
        self.assertEqual(repeat.args["kind"], "polar")
        self.assertEqual([s.verb for s in repeat.body], [
            Verb.CREATE, Verb.ROTATE, Verb.ANCHOR, Verb.POLAR, Verb.ASSIGN_MATERIAL,
        ])
        self.assertEqual(repeat.body[0].target, "spoke[k]")
        self.assertEqual(self.plan.patterns, {"spoke": 6})

    def test_radial_vectors_per_instance(self):
        """정상 케이스: radial 방향은 인스턴스마다 월드 벡터"""
        rotate = self.plan.block2[2].steps[0].body[1]

        self.assertEqual(rotate.args["family"], "radial_from")
        self.assertEqual(rotate.args["local_axis"], "Z")
        vectors = rotate.args["vectors"]
        self.assertEqual(len(vectors), 6)
        self.assertAlmostEqual(vectors[0][0], 1.0)
        self.assertAlmostEqual(vectors[3][0], -1.0)

    def test_polar_args(self):
        """정상 케이스: polar 시작각/간격/반지름"""
        polar = self.plan.block2[2].steps[0].body[3]

        self.assertEqual((polar.args["theta"], polar.args["theta_step"], polar.args["dr"]), (0.0, 60.0, 0.35))

    def test_cutter_naming(self):
        """정상 케이스: subtract tool 은 _cutter 접미사"""
        steps = self.plan.block2[1].steps

        self.assertEqual(steps[0].target, "axle_hole_cutter")
        self.assertEqual(steps[-1].verb, Verb.BOOLEAN_SUBTRACT)
        self.assertEqual(steps[-1].args, {"tool": "axle_hole_cutter", "target": "hub"})
        self.assertEqual(self.plan.object_names["axle_hole"], "axle_hole_cutter")

    def test_object_name(self):
        """정상 케이스: 접미사는 한 번만"""
        self.assertEqual(object_name("hole", True), "hole_cutter")
        self.assertEqual(object_name("hole_cutter", True), "hole_cutter")
        self.assertEqual(object_name("hole", False), "hole")

    def test_grid_repeat(self):
        """정상 케이스: grid 패턴 offset 은 기준점 + 행/열 간격"""
        repeat = _plan("pegboard.graph").block2[2].steps[0]
        offset = next(s for s in repeat.body if s.verb == Verb.OFFSET)

        self.assertEqual(repeat.args["kind"], "grid")
        self.assertEqual(offset.args["vector"], (-0.3, -0.15, 0.0))
        self.assertEqual(offset.args["grid_step"], (0.3, 0.2))
        self.assertEqual(offset.args["cols"], 3)
        self.assertEqual([s.verb for s in repeat.body].count(Verb.ALIGN), 2)

    def test_boolean_record(self):
        """정상 케이스: 별도 boolean 레코드는 Boolean 스텝만"""
        result = plan(load_graph(_graph(
            "L0: id=part | size=AUTO | assembly_order=[[plate], [hole], [cut]]",
            "L1: id=plate | parent=part | size=box(1,1,0.1)",
            "L1: id=hole | parent=part | size=cylinder(0.1,0.2) | align=Align hole.center to plate.center",
            "L1: id=cut | parent=part | create_method=boolean_subtract | tool_id=hole | target_id=plate",
        )))

        cut_section = result.block2[2]
        self.assertEqual(len(cut_section.steps), 1)
        self.assertEqual(cut_section.steps[0].verb, Verb.BOOLEAN_SUBTRACT)
        self.assertEqual(cut_section.steps[0].args["tool"], "hole_cutter")
        self.assertEqual(result.block2[1].steps[0].target, "hole_cutter")

    def test_euler_after_orientation(self):
        """정상 케이스: orientation 회전 다음에 euler 회전"""
        result = plan(load_graph(_graph(
            "L0: id=knob | size=cylinder(0.02,0.03) | orientation=axis:+Y | rotation=euler(0, 0, 45)",
        )))
        steps = result.steps_for("knob")

        self.assertEqual([s.args.get("family") for s in steps[1:3]], ["axis", "euler"])
        self.assertEqual(steps[2].args["euler"], (0.0, 0.0, 45.0))


ROD_GRAPH = _graph(
    "L0: id=frame | size=AUTO | assembly_order=[[post_a, post_b], [rod], [knob]]",
    "L1: id=post_a | parent=frame | size=box(0.1,0.1,1) | pos=offset(-1, 0, 0.5)",
    "L1: id=post_b | parent=frame | size=box(0.1,0.1,1) | pos=offset(1, 0, 0.5)",
    "L1: id=rod | parent=frame | size=cylinder(0.05,0.1) | connect=post_a.top + post_b.top",
    "L1: id=knob | parent=frame | size=sphere(0.05) | align=Align knob.center to rod.center | pos=offset(0, 0, 0.5)",
)


class TestOffsetReference(unittest.TestCase):
    """offset 기준 프레임 테스트"""

    def test_connected_reference_is_rotated(self):
        """정상 케이스: connect 로 놓인 기준은 해석된 회전을 따른다"""
        graph = load_graph(ROD_GRAPH)
        scene = resolve_scene(graph)
        offset = [s for s in plan(graph, scene).steps_for("knob") if s.verb is Verb.OFFSET][0]

        self.assertEqual(offset.args["reference"], "rod")
        self.assertIs(offset.args["axis_aligned"], False)
        self.assertTrue(np.allclose(scene.instance("knob").frame.origin, [0.5, 0, 1]))

    def test_plain_reference_is_axis_aligned(self):
        """정상 케이스: 회전 없는 기준은 월드 축 그대로"""
        offset = [s for s in _plan("dining_table.graph").steps_for("leg_fl") if s.verb is Verb.OFFSET][0]

        self.assertEqual(offset.args["reference"], "tabletop")
        self.assertIs(offset.args["axis_aligned"], True)


if __name__ == "__main__":
    unittest.main()
