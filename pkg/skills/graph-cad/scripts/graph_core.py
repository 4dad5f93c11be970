#!/usr/bin/env python3
"""분해 그래프 의미 검증 및 패턴 전개

validate()  : GraphAst -> ValidatedGraph (진단을 모두 모아 ValidationFailed 로 보고)
expand_patterns() : 패턴 템플릿 노드를 <id>[k] 인스턴스로 전개
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

from graph_dsl import (
    BOOLEAN_METHODS,
    AlignSpec,
    AutoSize,
    AvgTarget,
    FeatureRef,
    GraphAst,
    GridPattern,
    MaterialDef,
    NodeRecord,
    OffsetPos,
    PolarPattern,
    PolarPos,
    Span,
    parse_graph,
)
from graph_errors import (
    AfterCrossesGroup,
    AssemblyOrderGap,
    AutoSizeOnPrimitive,
    BooleanMissingOperands,
    CycleDetected,
    DanglingReference,
    GraphCadError,
    InvalidPattern,
    NonPositiveCount,
    ValidationFailed,
    ZeroSpacingWithMultipleCells,
)

logger = logging.getLogger(__name__)

_INSTANCE_RE = re.compile(r"^(.+)\[(\d+)\]$")


@dataclass(frozen=True)
class PatternExpansion:
    """패턴 템플릿과 전개된 인스턴스 id 목록"""

    template: NodeRecord
    instance_ids: tuple[str, ...]


@dataclass(frozen=True)
class ValidatedGraph:
    nodes: Mapping[str, NodeRecord]
    parent_edges: tuple[tuple[str, str], ...]
    order_edges: tuple[tuple[str, str], ...]
    materials: Mapping[str, MaterialDef]
    expanded_instances: Mapping[str, PatternExpansion] = field(default_factory=dict)
    source: GraphAst = field(default_factory=GraphAst, compare=False, repr=False)

    def children(self, node_id: str) -> list[str]:
        return [child for parent, child in self.parent_edges if parent == node_id]

    def roots(self) -> list[str]:
        return [nid for nid, node in self.nodes.items() if node.parent is None]

    def groups(self, node_id: str) -> list[tuple[str, ...]]:
        """assembly_order 그룹 (생략 시 자식 전체가 한 그룹)"""
        node = self.nodes[node_id]
        if node.assembly_order:
            return [tuple(g) for g in node.assembly_order]
        kids = self.children(node_id)
        return [tuple(kids)] if kids else []

    def method(self, node_id: str) -> str:
        return effective_method(self.nodes[node_id], bool(self.children(node_id)))

    def is_group(self, node_id: str) -> bool:
        return self.method(node_id) == "group"

    def has_concrete_size(self, node_id: str) -> bool:
        size = self.nodes[node_id].size
        return size is not None and not isinstance(size, AutoSize)

    def instances_of(self, node_id: str) -> tuple[str, ...]:
        """템플릿 id 면 전개된 인스턴스들, 아니면 자기 자신"""
        expansion = self.expanded_instances.get(node_id)
        if expansion is not None:
            return expansion.instance_ids
        return (node_id,) if node_id in self.nodes else ()

    def template_of(self, node_id: str) -> str | None:
        for template_id, expansion in self.expanded_instances.items():
            if node_id in expansion.instance_ids:
                return template_id
        return None

    def span(self, node_id: str, key: str | None = None) -> Span | None:
        span = self.source.span(node_id, key)
        if span is None:
            template = self.template_of(node_id)
            if template is not None:
                span = self.source.span(template, key)
        return span

    @property
    def is_expanded(self) -> bool:
        return not any(node.pattern is not None for node in self.nodes.values())


def effective_method(node: NodeRecord, has_children: bool) -> str:
    if node.create_method:
        return node.create_method
    return "group" if has_children else "primitive"


# ============================================================================
# Validation
# ============================================================================


class _Checker:
    def __init__(
        self,
        nodes: dict[str, NodeRecord],
        materials: dict[str, MaterialDef],
        source: GraphAst,
        expanded: Mapping[str, PatternExpansion],
    ):
        self.nodes = nodes
        self.materials = materials
        self.source = source
        self.expanded = expanded
        self.diagnostics: list[GraphCadError] = []
        self.children: dict[str, list[str]] = {nid: [] for nid in nodes}
        for nid, node in nodes.items():
            if node.parent in nodes:
                self.children[node.parent].append(nid)

    def report(self, error: GraphCadError, node_id: str, key: str | None = None) -> None:
        span = self.source.span(node_id, key)
        if span is None:
            for template_id, exp in self.expanded.items():
                if node_id in exp.instance_ids:
                    span = self.source.span(template_id, key)
        if span is not None:
            error.at(span.line, span.column)
        self.diagnostics.append(error)

    def _node_exists(self, name: str) -> bool:
        return name in self.nodes or name in self.expanded

    def _template_of(self, name: str) -> str | None:
        """전개 전 인스턴스 id ('spoke[2]') -> 템플릿 id, 범위 밖이면 None"""
        match = _INSTANCE_RE.match(name)
        if match is None:
            return None
        node = self.nodes.get(match.group(1))
        if node is None or node.pattern is None or int(match.group(2)) >= node.pattern.count:
            return None
        return node.id

    def _ref_exists(self, ref: FeatureRef) -> bool:
        if ref.selector is None or ref.selector == "*":
            return self._node_exists(ref.node)
        if f"{ref.node}[{ref.selector}]" in self.nodes:
            return True
        node = self.nodes.get(ref.node)
        if node is not None and node.pattern is not None:
            count = node.pattern.count
            return 0 <= int(ref.selector) < count
        return False

    def _target_refs(self, target) -> list[FeatureRef]:
        return list(target.refs) if isinstance(target, AvgTarget) else [target]

    def run(self) -> None:
        for nid, node in self.nodes.items():
            self._check_refs(nid, node)
            self._check_boolean(nid, node)
            self._check_size(nid, node)
            self._check_pattern(nid, node)
            self._check_assembly_order(nid, node)
        self._check_after()
        self._check_cycles()

    def _check_refs(self, nid: str, node: NodeRecord) -> None:
        if node.parent is not None and node.parent not in self.nodes:
            self.report(DanglingReference(f"{nid}: unknown parent {node.parent!r}"), nid, "parent")
        if node.mat is not None and node.mat not in self.materials:
            self.report(DanglingReference(f"{nid}: unknown material {node.mat!r}"), nid, "mat")
        for key in ("after", "depends_on"):
            for dep in getattr(node, key):
                if not self._node_exists(dep) and self._template_of(dep) is None:
                    self.report(DanglingReference(f"{nid}: unknown {key} node {dep!r}"), nid, key)
        for key in ("tool_id", "target_id"):
            ref = getattr(node, key)
            if ref is None:
                continue
            if not self._node_exists(ref):
                self.report(DanglingReference(f"{nid}: unknown {key} {ref!r}"), nid, key)
            elif self.nodes.get(ref) is not None and self.nodes[ref].pattern is not None:
                self.report(InvalidPattern(f"{nid}: {key} cannot name pattern template {ref!r}"), nid, key)
        for align in node.align:
            subject_ok = align.this_node == nid or self._is_template_subject(nid, align)
            if not subject_ok:
                self.report(
                    DanglingReference(f"{nid}: align subject {align.this_node!r} is not this node"),
                    nid, "align",
                )
            for ref in self._target_refs(align.target):
                if not self._ref_exists(ref):
                    self.report(DanglingReference(f"{nid}: unknown align target {ref.to_text()!r}"), nid, "align")
        if node.connect is not None:
            for ref in (node.connect.a, node.connect.b):
                if not self._ref_exists(ref):
                    self.report(DanglingReference(f"{nid}: unknown connect point {ref.to_text()!r}"), nid, "connect")
        if node.orientation is not None and node.orientation.target is not None:
            if not self._node_exists(node.orientation.target):
                self.report(
                    DanglingReference(f"{nid}: unknown orientation reference {node.orientation.target!r}"),
                    nid, "orientation",
                )

    def _is_template_subject(self, nid: str, align: AlignSpec) -> bool:
        exp = self.expanded.get(align.this_node)
        return exp is not None and nid in exp.instance_ids

    def _check_boolean(self, nid: str, node: NodeRecord) -> None:
        method = effective_method(node, bool(self.children[nid]))
        has_operands = node.tool_id is not None and node.target_id is not None
        if method in BOOLEAN_METHODS and not has_operands:
            self.report(BooleanMissingOperands(f"{nid}: {method} needs tool_id and target_id"), nid, "create_method")
        if method not in BOOLEAN_METHODS and (node.tool_id is not None or node.target_id is not None):
            self.report(BooleanMissingOperands(f"{nid}: tool_id/target_id only apply to boolean nodes"), nid, "tool_id")

    def _check_size(self, nid: str, node: NodeRecord) -> None:
        method = effective_method(node, bool(self.children[nid]))
        if isinstance(node.size, AutoSize) and method not in ("group", "auto_connect"):
            self.report(AutoSizeOnPrimitive(f"{nid}: size=AUTO on a {method} node"), nid, "size")

    def _check_pattern(self, nid: str, node: NodeRecord) -> None:
        if node.pattern is None:
            return
        if self.children[nid]:
            self.report(InvalidPattern(f"{nid}: pattern template cannot have children"), nid, "pattern")
        if isinstance(node.pattern, PolarPattern) and node.pos is not None:
            self.report(InvalidPattern(f"{nid}: polar pattern replaces pos"), nid, "pattern")
        if isinstance(node.pattern, GridPattern) and isinstance(node.pos, PolarPos):
            self.report(InvalidPattern(f"{nid}: grid pattern needs an offset pos"), nid, "pattern")

    def _check_assembly_order(self, nid: str, node: NodeRecord) -> None:
        if not node.assembly_order:
            return
        kids = self.children[nid]
        listed: list[str] = []
        for group in node.assembly_order:
            for entry in group:
                if not self._node_exists(entry):
                    self.report(DanglingReference(f"{nid}: assembly_order names unknown node {entry!r}"), nid, "assembly_order")
                    continue
                owners = self.expanded[entry].instance_ids if entry in self.expanded else (entry,)
                if any(self.nodes[o].parent != nid for o in owners if o in self.nodes):
                    self.report(AssemblyOrderGap(f"{nid}: {entry!r} is not a child"), nid, "assembly_order")
                    continue
                listed.append(entry)
        for kid in kids:
            count = listed.count(kid)
            if count == 0:
                self.report(AssemblyOrderGap(f"{nid}: child {kid!r} missing from assembly_order"), nid, "assembly_order")
            elif count > 1:
                self.report(AssemblyOrderGap(f"{nid}: child {kid!r} listed {count} times"), nid, "assembly_order")

    def _group_of(self, nid: str) -> tuple[str | None, int]:
        node = self.nodes[nid]
        parent = node.parent
        if parent is None or parent not in self.nodes:
            return parent, 0
        order = self.nodes[parent].assembly_order
        if not order:
            return parent, 0
        for index, group in enumerate(order):
            if nid in group:
                return parent, index
        return parent, -1

    def _check_after(self) -> None:
        for nid, node in self.nodes.items():
            for dep in node.after:
                if dep not in self.nodes:
                    dep = self._template_of(dep)
                    if dep is None:
                        continue
                if self._group_of(dep) != self._group_of(nid):
                    self.report(AfterCrossesGroup(f"{nid}: after={dep!r} is not in the same assembly group"), nid, "after")

    def _check_cycles(self) -> None:
        graph: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for nid, node in self.nodes.items():
            if node.parent in graph:
                graph[node.parent].append(nid)
            for dep in node.after + node.depends_on:
                for src in self._expand_name(dep):
                    src = src if src in graph else self._template_of(src)
                    if src in graph:
                        graph[src].append(nid)
        for path in _find_cycles(graph):
            self.report(CycleDetected(path), path[0])

    def _expand_name(self, name: str) -> tuple[str, ...]:
        if name in self.expanded:
            return self.expanded[name].instance_ids
        return (name,)


def _find_cycles(graph: Mapping[str, list[str]]) -> Iterator[list[str]]:
    """DFS 로 사이클 경로를 찾는다 (각 사이클 한 번씩)"""
    white, grey, black = 0, 1, 2
    color = {n: white for n in graph}
    stack: list[str] = []
    reported: set[frozenset[str]] = set()

    def visit(start: str) -> Iterator[list[str]]:
        todo = [(start, iter(graph[start]))]
        color[start] = grey
        stack.append(start)
        while todo:
            node, successors = todo[-1]
            nxt = next(successors, None)
            if nxt is None:
                todo.pop()
                stack.pop()
                color[node] = black
                continue
            if color.get(nxt) == grey:
                path = stack[stack.index(nxt):] + [nxt]
                key = frozenset(path)
                if key not in reported:
                    reported.add(key)
                    yield path
            elif color.get(nxt) == white:
                color[nxt] = grey
                stack.append(nxt)
                todo.append((nxt, iter(graph[nxt])))

    for node in graph:
        if color[node] == white:
            yield from visit(node)


def check(ast: GraphAst) -> list[GraphCadError]:
    """검증 진단 목록 (예외 없이)"""
    checker = _Checker(
        {n.id: n for n in ast.nodes}, {m.name: m for m in ast.materials}, ast, {}
    )
    checker.run()
    return checker.diagnostics


def _build(
    nodes: dict[str, NodeRecord],
    materials: dict[str, MaterialDef],
    source: GraphAst,
    expanded: Mapping[str, PatternExpansion],
) -> ValidatedGraph:
    checker = _Checker(nodes, materials, source, expanded)
    checker.run()
    if checker.diagnostics:
        raise ValidationFailed(checker.diagnostics)

    parent_edges = tuple((n.parent, nid) for nid, n in nodes.items() if n.parent is not None)
    order_edges: list[tuple[str, str]] = []
    for nid, node in nodes.items():
        for dep in node.after + node.depends_on:
            for src in checker._expand_name(dep):
                if (src, nid) not in order_edges:
                    order_edges.append((src, nid))
    return ValidatedGraph(
        nodes=dict(nodes),
        parent_edges=parent_edges,
        order_edges=tuple(order_edges),
        materials=dict(materials),
        expanded_instances=dict(expanded),
        source=source,
    )


def validate(ast: GraphAst) -> ValidatedGraph:
    """GraphAst 검증; 실패하면 모든 진단을 담은 ValidationFailed"""
    graph = _build({n.id: n for n in ast.nodes}, {m.name: m for m in ast.materials}, ast, {})
    logger.debug("validated %d node(s)", len(graph.nodes))
    return graph


# ============================================================================
# Pattern expansion
# ============================================================================


def _pattern_instances(node: NodeRecord) -> list[NodeRecord]:
    pattern = node.pattern
    records: list[NodeRecord] = []
    if isinstance(pattern, GridPattern):
        if pattern.rows <= 0 or pattern.cols <= 0:
            raise NonPositiveCount(f"{node.id}: grid needs rows, cols >= 1")
        if (pattern.cols > 1 and pattern.x_spacing == 0) or (pattern.rows > 1 and pattern.y_spacing == 0):
            raise ZeroSpacingWithMultipleCells(f"{node.id}: zero spacing with multiple cells")
        base = node.pos if isinstance(node.pos, OffsetPos) else OffsetPos(0.0, 0.0, 0.0)
        x0, y0 = pattern.start_offset
        for r in range(pattern.rows):
            for c in range(pattern.cols):
                pos = OffsetPos(
                    base.dx + x0 + c * pattern.x_spacing,
                    base.dy + y0 + r * pattern.y_spacing,
                    base.dz,
                )
                records.append(replace(node, pattern=None, pos=pos))
    else:
        assert isinstance(pattern, PolarPattern)
        if pattern.count <= 0:
            raise NonPositiveCount(f"{node.id}: polar needs count >= 1")
        step = pattern.angle_step if pattern.angle_step is not None else 360.0 / pattern.count
        if pattern.count > 1 and step == 0:
            raise ZeroSpacingWithMultipleCells(f"{node.id}: zero angle_step with multiple instances")
        for k in range(pattern.count):
            pos = PolarPos(pattern.start_angle + k * step, pattern.radius)
            records.append(replace(node, pattern=None, pos=pos))

    instances = []
    for k, rec in enumerate(records):
        iid = f"{node.id}[{k}]"
        aligns = tuple(
            replace(a, this_node=iid) if a.this_node == node.id else a for a in rec.align
        )
        instances.append(replace(rec, id=iid, align=aligns))
    return instances


def expand_patterns(graph: ValidatedGraph) -> ValidatedGraph:
    """패턴 노드를 인스턴스로 전개 (이미 전개된 그래프는 그대로 반환)"""
    if graph.is_expanded:
        return graph

    nodes: dict[str, NodeRecord] = {}
    expanded: dict[str, PatternExpansion] = dict(graph.expanded_instances)
    for nid, node in graph.nodes.items():
        if node.pattern is None:
            nodes[nid] = node
            continue
        try:
            instances = _pattern_instances(node)
        except GraphCadError as exc:
            span = graph.source.span(nid, "pattern")
            if span is not None:
                exc.at(span.line, span.column)
            raise
        for inst in instances:
            nodes[inst.id] = inst
        expanded[nid] = PatternExpansion(node, tuple(i.id for i in instances))
        logger.debug("expanded %s into %d instance(s)", nid, len(instances))

    def rewrite(names: tuple[str, ...]) -> tuple[str, ...]:
        out: list[str] = []
        for name in names:
            out.extend(expanded[name].instance_ids if name in expanded and name not in nodes else (name,))
        return tuple(out)

    for nid, node in list(nodes.items()):
        changes = {}
        if node.assembly_order:
            groups = tuple(rewrite(tuple(g)) for g in node.assembly_order)
            if groups != node.assembly_order:
                changes["assembly_order"] = groups
        for key in ("after", "depends_on"):
            names = rewrite(getattr(node, key))
            if names != getattr(node, key):
                changes[key] = names
        if changes:
            nodes[nid] = replace(node, **changes)

    return _build(nodes, dict(graph.materials), graph.source, expanded)


def load_graph(text: str) -> ValidatedGraph:
    """파싱 + 검증 + 패턴 전개"""
    return expand_patterns(validate(parse_graph(text)))
