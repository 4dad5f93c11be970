#!/usr/bin/env python3
"""ValidatedGraph -> ActionPlan

BLOCK 0 (장면 초기화/단위), BLOCK 1 (재질), BLOCK 2 (스테이지 섹션)로 구성된
중간 표현을 만든다. 객체마다 Create < Rotate < Align/Anchor < 배치 순서를 지킨다.
섹션 순서는 resolver 와 같은 build_sections() 를 사용한다.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np

from geometry import AXIS_VECTORS, euler_matrix, face_normal_local
from graph_core import ValidatedGraph, expand_patterns
from graph_dsl import (
    AlignSpec,
    AvgTarget,
    BoxSize,
    CylinderSize,
    FeatureRef,
    GridPattern,
    NodeRecord,
    OffsetPos,
    PolarPattern,
    PolarPos,
    SphereSize,
    TargetRef,
    canonical_feature,
)
from ordering import BuildSection, build_sections, order_steps
from resolver import ResolvedScene, resolve_scene

logger = logging.getLogger(__name__)

__all__ = ["Verb", "Step", "Section", "ActionPlan", "plan", "order_steps", "object_name"]

CUTTER_SUFFIX = "_cutter"
HEADING_MEMBER_LIMIT = 3

class Verb(str, enum.Enum):
    CREATE = "Create"
    ROTATE = "Rotate"
    ALIGN = "Align"
    ANCHOR = "Anchor"
    OFFSET = "Offset"
    POLAR = "Polar"
    CONNECT = "Connect"
    BOOLEAN_SUBTRACT = "BooleanSubtract"
    BOOLEAN_UNION = "BooleanUnion"
    BEVEL = "Bevel"
    SNAP = "Snap"
    VALIDATE = "Validate"
    ASSIGN_MATERIAL = "AssignMaterial"
    RESET_SCENE = "ResetScene"
    SET_UNITS = "SetUnits"
    DEFINE_MATERIAL = "DefineMaterial"
    REPEAT = "Repeat"


@dataclass(frozen=True)
class Step:
    verb: Verb | str
    target: str | None = None
    args: Mapping[str, Any] = field(default_factory=dict)
    body: tuple["Step", ...] = ()


@dataclass(frozen=True)
class Section:
    number: int
    heading: str
    steps: tuple[Step, ...]

    @property
    def closing(self) -> str:
        return f"Stage {self.number} complete."


@dataclass(frozen=True)
class ActionPlan:
    block0: tuple[Step, ...]
    block1: tuple[Step, ...] = ()
    block2: tuple[Section, ...] = ()
    object_names: Mapping[str, str] = field(default_factory=dict)
    patterns: Mapping[str, int] = field(default_factory=dict)

    def steps_for(self, node_id: str) -> list[Step]:
        """한 객체에 대한 스텝 (Repeat 본문 포함, 등장 순서)"""
        found: list[Step] = []
        for section in self.block2:
            for step in section.steps:
                if step.target == node_id:
                    found.append(step)
                for inner in step.body:
                    if inner.target == node_id:
                        found.append(inner)
        return found


def object_name(node_id: str, is_cutter: bool) -> str:
    if is_cutter and not node_id.endswith(CUTTER_SUFFIX):
        return node_id + CUTTER_SUFFIX
    return node_id


def _vector(values) -> tuple[float, ...]:
    return tuple(float(v) + 0.0 for v in values)


def _local_axis(normal) -> str | tuple[float, ...]:
    vec = _vector(normal)
    for letter, axis in (("X", (1.0, 0.0, 0.0)), ("Y", (0.0, 1.0, 0.0)), ("Z", (0.0, 0.0, 1.0))):
        if vec == axis:
            return letter
    return vec


class _Planner:
    def __init__(self, graph: ValidatedGraph, scene: ResolvedScene | None):
        self.graph = graph
        self._scene = scene
        self.cutters = self._subtract_tools()
        self.names: dict[str, str] = {}

    @property
    def scene(self) -> ResolvedScene:
        if self._scene is None:
            logger.debug("resolving scene for world-space orientation vectors")
            self._scene = resolve_scene(self.graph)
        return self._scene

    def _subtract_tools(self) -> set[str]:
        tools = set()
        for nid, node in self.graph.nodes.items():
            if self.graph.method(nid) == "boolean_subtract" and node.tool_id:
                tools.add(node.tool_id)
        return tools

    def name(self, node_id: str) -> str:
        name = object_name(node_id, node_id in self.cutters)
        self.names[node_id] = name
        return name

    # --- per-object steps ---

    def _create(self, node: NodeRecord, target: str) -> Step:
        size = node.size
        if self.graph.method(node.id) == "group":
            dims = _vector((size.lx, size.ly, size.lz)) if isinstance(size, BoxSize) else (0.0, 0.0, 0.0)
            return Step(Verb.CREATE, target, {"kind": "empty", "dims": dims})
        if isinstance(size, BoxSize):
            return Step(Verb.CREATE, target, {"kind": "cube", "dims": _vector((size.lx, size.ly, size.lz))})
        if isinstance(size, CylinderSize):
            return Step(Verb.CREATE, target, {"kind": size.kind, "dims": _vector((size.d, size.h))})
        if isinstance(size, SphereSize):
            return Step(Verb.CREATE, target, {"kind": size.kind, "dims": _vector((size.d,))})
        return Step(Verb.CREATE, target, {"kind": "empty", "dims": (0.0, 0.0, 0.0)})

    def _world_vector(self, instance_id: str, node: NodeRecord, local) -> tuple[float, ...]:
        frame, _ = self.scene.pose(instance_id)
        rotation = frame.matrix
        if node.rotation is not None:
            rotation = rotation @ euler_matrix(node.rotation.rx, node.rotation.ry, node.rotation.rz).T
        return _vector(np.round(rotation @ np.asarray(local, dtype=float), 12))

    def _orient(self, node: NodeRecord, target: str, instance_ids: tuple[str, ...]) -> Step:
        directive = node.orientation
        if directive is None or directive.family == "axis":
            axis = directive.axis if directive is not None and directive.axis else "+Z"
            return Step(Verb.ROTATE, target, {
                "family": "axis", "local_axis": "Z", "axis": axis,
                "vector": _vector(AXIS_VECTORS[axis]), "reference": None,
            })
        if directive.family in ("normal_to", "face_align"):
            local_vec = face_normal_local(directive.face or "+Z_face")
        else:
            local_vec = np.array([0.0, 0.0, 1.0])
        local = _local_axis(local_vec)
        vectors = tuple(self._world_vector(i, node, local_vec) for i in instance_ids)
        args: dict[str, Any] = {
            "family": directive.family, "local_axis": local, "reference": directive.target,
            "face": directive.face, "target_face": directive.target_face,
        }
        if len(vectors) == 1:
            args["vector"] = vectors[0]
        else:
            args["vectors"] = vectors
        return Step(Verb.ROTATE, target, args)

    def _points(self, target: TargetRef) -> tuple[tuple[str, str], ...]:
        refs = target.refs if isinstance(target, AvgTarget) else (target,)
        points: list[tuple[str, str]] = []
        for ref in refs:
            if ref.selector == "*" or (ref.selector is None and ref.node in self.graph.expanded_instances):
                ids = self.graph.instances_of(ref.node)
            elif ref.selector is not None:
                ids = (f"{ref.node}[{ref.selector}]",)
            else:
                ids = (ref.node,)
            points.extend((self.name(i), _canonical(ref.feature)) for i in ids)
        return tuple(points)

    def _reference_of(self, align: AlignSpec) -> tuple[str, bool]:
        """offset 기준 객체 이름과 그 회전이 월드 축과 일치하는지"""
        ref = align.target.refs[0] if isinstance(align.target, AvgTarget) else align.target
        ids = self.graph.instances_of(ref.node) if ref.selector in (None, "*") else (f"{ref.node}[{ref.selector}]",)
        ref_id = ids[0] if ids else ref.node
        aligned = bool(np.allclose(self.scene.reference_frame(align.target).matrix, np.eye(3), atol=1e-9))
        return self.name(ref_id), aligned

    def _align(self, align: AlignSpec, target: str) -> Step:
        points = self._points(align.target)
        return Step(Verb.ALIGN, target, {
            "axes": "".join(align.axes),
            "this": _canonical(align.this_feature),
            "points": points,
            "average": isinstance(align.target, AvgTarget) or len(points) > 1,
            "text": self._align_text(align, target),
        })

    @staticmethod
    def _align_text(align: AlignSpec, target: str) -> str:
        head = "Align" if align.axes == ("X", "Y", "Z") else f"Align({','.join(align.axes)})"
        return f"{head} {target}.{_feature_text(align.this_feature)} to {_target_text(align.target)}"

    def node_steps(self, node: NodeRecord, target: str, instance_ids: tuple[str, ...],
                   pattern: GridPattern | PolarPattern | None = None) -> list[Step]:
        method = self.graph.method(node.id)
        if method.startswith("boolean_") and node.tool_id != node.id:
            verb = Verb.BOOLEAN_SUBTRACT if method == "boolean_subtract" else Verb.BOOLEAN_UNION
            return [Step(verb, node.target_id, {"tool": self.name(node.tool_id or ""), "target": node.target_id})]

        steps = [self._create(node, target), self._orient(node, target, instance_ids)]
        if node.rotation is not None:
            steps.append(Step(Verb.ROTATE, target, {
                "family": "euler", "euler": _vector((node.rotation.rx, node.rotation.ry, node.rotation.rz))}))

        if node.connect is not None:
            steps.append(Step(Verb.CONNECT, target, {
                "a": self._points(node.connect.a), "b": self._points(node.connect.b),
                "text": f"{_ref_text(node.connect.a)} and {_ref_text(node.connect.b)}",
            }))
        else:
            for align in node.align:
                steps.append(self._align(align, target))
            reference, aligned = (self._reference_of(node.align[0]) if node.align else (None, True))
            if not node.align:
                steps.append(Step(Verb.ANCHOR, target, {"reference": "world.origin"}))
            steps.extend(self._place(node, target, reference, aligned, pattern))

        if method in ("boolean_subtract", "boolean_union") and node.tool_id == node.id:
            verb = Verb.BOOLEAN_SUBTRACT if method == "boolean_subtract" else Verb.BOOLEAN_UNION
            steps.append(Step(verb, node.target_id, {"tool": target, "target": node.target_id}))
        if node.mat and method != "group":
            steps.append(Step(Verb.ASSIGN_MATERIAL, target, {"material": node.mat}))
        return steps

    @staticmethod
    def _place(node: NodeRecord, target: str, reference: str | None, aligned: bool,
               pattern: GridPattern | PolarPattern | None) -> list[Step]:
        frame = {"reference": reference, "axis_aligned": aligned}
        if isinstance(pattern, GridPattern):
            base = node.pos if isinstance(node.pos, OffsetPos) else OffsetPos(0.0, 0.0, 0.0)
            x0, y0 = pattern.start_offset
            return [Step(Verb.OFFSET, target, {
                **frame,
                "vector": _vector((base.dx + x0, base.dy + y0, base.dz)),
                "grid_step": _vector((pattern.x_spacing, pattern.y_spacing)),
                "cols": pattern.cols,
            })]
        if isinstance(pattern, PolarPattern):
            step = pattern.angle_step if pattern.angle_step is not None else 360.0 / pattern.count
            return [Step(Verb.POLAR, target, {
                **frame, "theta": float(pattern.start_angle), "theta_step": float(step), "dr": float(pattern.radius),
            })]
        if isinstance(node.pos, OffsetPos):
            return [Step(Verb.OFFSET, target, {**frame, "vector": _vector((node.pos.dx, node.pos.dy, node.pos.dz))})]
        if isinstance(node.pos, PolarPos):
            return [Step(Verb.POLAR, target, {**frame, "theta": float(node.pos.theta_deg), "dr": float(node.pos.dr)})]
        return []

    # --- sections ---

    def section_steps(self, section: BuildSection) -> list[Step]:
        if section.kind == "validate":
            text = self.graph.nodes[section.owner or ""].constraint or ""
            return [Step(Verb.VALIDATE, section.owner, {"text": text})]

        steps: list[Step] = []
        members = list(section.members)
        i = 0
        while i < len(members):
            template = self.graph.template_of(members[i])
            if template is not None:
                ids = self.graph.instances_of(template)
                run = tuple(members[i:i + len(ids)])
                if run == ids and len(ids) > 1:
                    steps.append(self._repeat(template, ids))
                    i += len(ids)
                    continue
            node = self.graph.nodes[members[i]]
            steps.extend(self.node_steps(node, self.name(node.id), (node.id,)))
            i += 1
        return steps

    def _repeat(self, template_id: str, ids: tuple[str, ...]) -> Step:
        template = self.graph.expanded_instances[template_id].template
        for iid in ids:
            self.name(iid)
        generic = object_name(f"{template_id}[k]", template_id in self.cutters)
        first = self.graph.nodes[ids[0]]
        body_node = replace(first, pos=template.pos)
        body = self.node_steps(body_node, generic, ids, template.pattern)
        return Step(Verb.REPEAT, template_id, {
            "count": len(ids),
            "pattern": template.pattern.to_text() if template.pattern else "",
            "kind": "grid" if isinstance(template.pattern, GridPattern) else "polar",
        }, tuple(body))

    def heading(self, section: BuildSection) -> str:
        if section.kind == "validate":
            return f"Complete {section.owner} assembly"
        members = list(section.members)
        display: list[str] = []
        for member in members:
            shown = self.graph.template_of(member) or member
            if shown not in display:
                display.append(shown)
        attaches = section.kind == "group" and any(
            self.graph.nodes[m].align or self.graph.nodes[m].connect for m in members
        )
        verb = "Attach" if attaches else "Create"
        head = ", ".join(display[:HEADING_MEMBER_LIMIT])
        extra = len(display) - HEADING_MEMBER_LIMIT
        if extra > 0:
            head += f" (+{extra} more)"
        return f"{verb} {head}"


def _canonical(feature: str) -> str:
    return canonical_feature(feature) or feature


def _feature_text(feature: str) -> str:
    feature = _canonical(feature)
    return feature if feature == "center" else f"{feature}_face"


def _ref_text(ref: FeatureRef) -> str:
    return f"{ref.to_text().rsplit('.', 1)[0]}.{_feature_text(ref.feature)}"


def _target_text(target: TargetRef) -> str:
    if isinstance(target, AvgTarget):
        return "Avg(" + ", ".join(_ref_text(r) for r in target.refs) + ")"
    return _ref_text(target)


_BLOCK0 = (
    Step(Verb.RESET_SCENE, None, {}),
    Step(Verb.SET_UNITS, None, {"unit": "metres"}),
)


def plan(graph: ValidatedGraph, scene: ResolvedScene | None = None) -> ActionPlan:
    """그래프를 3-블록 ActionPlan 으로 변환"""
    graph = expand_patterns(graph)
    planner = _Planner(graph, scene)

    block1 = tuple(
        Step(Verb.DEFINE_MATERIAL, name, {"rgba": _vector(mat.rgba)})
        for name, mat in graph.materials.items()
    )
    sections: list[Section] = []
    for build in build_sections(graph):
        steps = planner.section_steps(build)
        if not steps:
            continue
        sections.append(Section(len(sections) + 1, planner.heading(build), tuple(steps)))

    patterns = {tid: len(exp.instance_ids) for tid, exp in graph.expanded_instances.items()}
    logger.info("planned %d section(s)", len(sections))
    return ActionPlan(_BLOCK0, block1, tuple(sections), dict(planner.names), patterns)

