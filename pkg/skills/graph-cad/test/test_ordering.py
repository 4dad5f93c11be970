#!/usr/bin/env python3
"""ordering.py 단위 테스트"""
import sys
import unittest
from pathlib import Path

# 테스트 대상 모듈 임포트
sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))
from graph_core import load_graph
from graph_errors import OrderingCycle
from ordering import BuildSection, build_sections, order_steps

CORPUS = Path(__file__).parent.parent / "corpus"


class TestOrderSteps(unittest.TestCase):
    """위상 정렬 테스트"""

    def test_keeps_input_order(self):
        """정상 케이스: 간선이 없으면 입력 순서 그대로"""
        self.assertEqual(order_steps(["c", "a", "b"]), ["c", "a", "b"])

    def test_after_edges(self):
        """정상 케이스: (선행, 후행) 간선을 지킨다"""
        self.assertEqual(order_steps(["a", "b", "c"], after=[("c", "a")]), ["b", "c", "a"])

    def test_depends_on_edges(self):
        """정상 케이스: depends_on 간선도 같이 반영"""
        result = order_steps(["a", "b", "c"], after=[("b", "a")], depends_on=[("c", "b")])

        self.assertEqual(result, ["c", "b", "a"])

    def test_ignores_outside_edges(self):
        """정상 케이스: 멤버 밖의 노드를 가리키는 간선은 무시"""
        self.assertEqual(order_steps(["a", "b"], after=[("z", "a")]), ["a", "b"])

    def test_cycle(self):
        """에러 케이스: 순환"""
        with self.assertRaises(OrderingCycle):
            order_steps(["a", "b"], after=[("a", "b"), ("b", "a")])


class TestBuildSections(unittest.TestCase):
    """섹션 구성 테스트"""

    def test_dining_table(self):
        """정상 케이스: AUTO 루트는 생성 섹션 없이 그룹 -> 검증 순"""
        graph = load_graph((CORPUS / "dining_table.graph").read_text(encoding="utf-8"))

        self.assertEqual(build_sections(graph), [
            BuildSection("group", "dining_table", ("tabletop",)),
            BuildSection("group", "dining_table", ("leg_fl", "leg_fr", "leg_bl", "leg_br")),
            BuildSection("validate", "dining_table", ("dining_table",)),
        ])

    def test_concrete_root(self):
        """정상 케이스: 크기가 있는 루트는 먼저 생성"""
        graph = load_graph(
            "# ----------  BEGIN_GRAPH  ----------\n"
            "L0: id=frame | size=box(1,1,1) | create_method=group\n"
            "L1: id=panel | parent=frame | size=box(1,1,0.1)\n"
            "# ----------  END_GRAPH  ----------\n"
        )

        sections = build_sections(graph)
        self.assertEqual(sections[0], BuildSection("create", None, ("frame",)))
        self.assertEqual(sections[1], BuildSection("group", "frame", ("panel",)))
        self.assertEqual(len(sections), 2)

    def test_pattern_instances_in_order(self):
        """정상 케이스: 패턴 인스턴스는 전개 순서대로 한 섹션에"""
        graph = load_graph((CORPUS / "wheel_hub.graph").read_text(encoding="utf-8"))

        sections = build_sections(graph)
        self.assertEqual([s.members for s in sections[:2]], [("hub",), ("axle_hole",)])
        self.assertEqual(sections[2].members, tuple(f"spoke[{k}]" for k in range(6)))
        self.assertEqual(sections[-1].kind, "validate")


if __name__ == "__main__":
    unittest.main()
