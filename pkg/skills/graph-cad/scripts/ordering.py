"""조립 순서 계산 (resolver / planner 공용)"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

from graph_core import ValidatedGraph
from graph_errors import OrderingCycle


@dataclass(frozen=True)
class BuildSection:
    """한 스테이지: kind 는 create | group | validate"""

    kind: str
    owner: str | None
    members: tuple[str, ...]


def order_steps(
    members: Sequence[str],
    after: Iterable[tuple[str, str]] = (),
    depends_on: Iterable[tuple[str, str]] = (),
) -> list[str]:
    """(선행, 후행) 간선에 대한 위상 정렬; 비교 불가한 노드는 입력 순서 유지"""
    index = {m: i for i, m in enumerate(members)}
    succ: dict[str, list[str]] = {m: [] for m in members}
    indegree = {m: 0 for m in members}
    for before, later in list(after) + list(depends_on):
        if before in index and later in index and later not in succ[before]:
            succ[before].append(later)
            indegree[later] += 1

    heap = [index[m] for m in members if indegree[m] == 0]
    heapq.heapify(heap)
    ordered: list[str] = []
    while heap:
        node = members[heapq.heappop(heap)]
        ordered.append(node)
        for nxt in succ[node]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, index[nxt])
    if len(ordered) != len(members):
        stuck = [m for m in members if m not in ordered]
        raise OrderingCycle(f"ordering cycle among: {', '.join(stuck)}")
    return ordered


def creates_object(graph: ValidatedGraph, node_id: str) -> bool:
    """섹션에서 생성 스텝을 갖는 노드인지 (AUTO 그룹은 자식으로부터 사후 계산)"""
    if graph.is_group(node_id):
        return graph.has_concrete_size(node_id)
    return True


def build_sections(graph: ValidatedGraph) -> list[BuildSection]:
    """루트 -> assembly_order 그룹 순으로 섹션 목록 생성"""
    sections: list[BuildSection] = []
    edges = graph.order_edges

    def visit_children(parent: str) -> None:
        for group in graph.groups(parent):
            ordered = order_steps(group, edges)
            members = tuple(m for m in ordered if creates_object(graph, m))
            if members:
                sections.append(BuildSection("group", parent, members))
            for member in ordered:
                if graph.children(member):
                    visit_children(member)
        if graph.nodes[parent].constraint:
            sections.append(BuildSection("validate", parent, (parent,)))

    for root in order_steps(graph.roots(), edges):
        if creates_object(graph, root):
            sections.append(BuildSection("create", None, (root,)))
        if graph.children(root):
            visit_children(root)
    return sections
