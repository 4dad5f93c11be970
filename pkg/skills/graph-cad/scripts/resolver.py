#!/usr/bin/env python3
"""배치 의미 실행기: ValidatedGraph -> ResolvedScene

노드마다 (1) 기본 자세로 생성 (2) orientation, 이어서 rotation 적용
(3) align 을 텍스트 순서대로 (지정 축만) (4) offset / polar / connect 순으로 배치한다.
모든 배치는 월드 좌표 기준이며 부모 변환을 상속하지 않는다.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from geometry import (
    ExtentBox,
    Frame,
    OrientationContext,
    PrimitiveShape,
    euler_matrix,
    extent_of,
    face_center_world,
    matrix_from_quaternion,
    quaternion_wxyz,
    resolve_orientation,
    rotation_aligning,
    shape_for,
    world_aabb,
)
from graph_core import ValidatedGraph, expand_patterns
from graph_dsl import (
    BOOLEAN_METHODS,
    AlignSpec,
    AvgTarget,
    FeatureRef,
    NodeRecord,
    OffsetPos,
    PolarPos,
    TargetRef,
)
from graph_errors import (
    CoincidentEndpoints,
    DegeneratePlacement,
    EmptyStarSet,
    ForwardReference,
    GraphCadError,
    UnknownTarget,
)
from ordering import build_sections

logger = logging.getLogger(__name__)

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class CsgRole:
    """solid | cutter_of(target) | union_member(target)"""

    role: str = "solid"
    of: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "of": self.of}


@dataclass(frozen=True)
class Instance:
    id: str
    class_name: str
    shape: PrimitiveShape
    frame: Frame
    extent: ExtentBox
    material: str | None = None
    csg: CsgRole = CsgRole()
    parent: str | None = None
    source: str = ""

    @property
    def is_cutter(self) -> bool:
        return self.csg.role == "cutter_of"


@dataclass(frozen=True)
class Anchor:
    """그룹 노드의 크기 기준 Empty (auto=True 면 자식 합집합에서 계산)"""

    id: str
    frame: Frame
    extent: ExtentBox
    auto: bool = False
    parent: str | None = None


class FeatureLookup:
    """피처 타깃 해석 공통 로직; pose()/_known() 을 구현해서 사용"""

    expansions: Mapping[str, tuple[str, ...]]

    def pose(self, node_id: str) -> tuple[Frame, ExtentBox]:
        raise NotImplementedError

    def _known(self, node_id: str) -> bool:
        raise NotImplementedError

    def target_ids(self, ref: FeatureRef) -> tuple[str, ...]:
        if ref.selector == "*":
            ids = tuple(self.expansions.get(ref.node, ()))
            if not ids and self._known(ref.node):
                ids = (ref.node,)
            if not ids:
                raise EmptyStarSet(f"{ref.node}[*] matches no instances")
            return ids
        if ref.selector is not None:
            return (f"{ref.node}[{ref.selector}]",)
        return tuple(self.expansions.get(ref.node, ())) or (ref.node,)

    def feature_point(self, ref: FeatureRef) -> np.ndarray:
        points = [face_center_world(*self.pose(i), ref.feature) for i in self.target_ids(ref)]
        return np.mean(points, axis=0)

    def target_point(self, target: TargetRef) -> np.ndarray:
        if isinstance(target, AvgTarget):
            return np.mean([self.feature_point(r) for r in target.refs], axis=0)
        return self.feature_point(target)

    def reference_frame(self, target: TargetRef) -> Frame:
        """offset/polar 가 해석되는 기준 프레임 (첫 번째 타깃의 회전)"""
        ref = target.refs[0] if isinstance(target, AvgTarget) else target
        frame, _ = self.pose(self.target_ids(ref)[0])
        return Frame.from_arrays(np.zeros(3), frame.matrix)


@dataclass(frozen=True)
class ResolvedScene(FeatureLookup):
    instances: tuple[Instance, ...] = ()
    anchors: tuple[Anchor, ...] = ()
    provenance: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    expansions: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def instance(self, node_id: str) -> Instance:
        for inst in self.instances:
            if inst.id == node_id:
                return inst
        raise UnknownTarget(f"no instance {node_id!r} in scene")

    def anchor(self, node_id: str) -> Anchor | None:
        return next((a for a in self.anchors if a.id == node_id), None)

    def _known(self, node_id: str) -> bool:
        return any(i.id == node_id for i in self.instances) or self.anchor(node_id) is not None

    def has(self, node_id: str) -> bool:
        return self._known(node_id)

    def pose(self, node_id: str) -> tuple[Frame, ExtentBox]:
        anchor = self.anchor(node_id)
        if anchor is not None:
            return anchor.frame, anchor.extent
        inst = self.instance(node_id)
        return inst.frame, inst.extent

    def parts(self) -> dict[str, tuple[Frame, ExtentBox]]:
        """GCS 평가 대상: 커터를 제외한 인스턴스 + 앵커"""
        parts = {i.id: (i.frame, i.extent) for i in self.instances if not i.is_cutter}
        parts.update({a.id: (a.frame, a.extent) for a in self.anchors})
        return parts


# ============================================================================
# Placement primitives
# ============================================================================


def apply_align(frame: Frame, extent: ExtentBox, align: AlignSpec, lookup: FeatureLookup) -> np.ndarray:
    """align 이동량: target − this, 지정되지 않은 축은 0"""
    target = lookup.target_point(align.target)
    this = face_center_world(frame, extent, align.this_feature)
    delta = target - this
    for i, axis in enumerate("XYZ"):
        if axis not in align.axes:
            delta[i] = 0.0
    return delta


def apply_connect(extent: ExtentBox, a_point, b_point) -> tuple[Frame, ExtentBox]:
    """A-B 선분 중점에 두고 로컬 +Z 를 (B−A) 로, Z 길이를 |B−A| 로"""
    a = np.asarray(a_point, dtype=float)
    b = np.asarray(b_point, dtype=float)
    direction = b - a
    length = float(np.linalg.norm(direction))
    if length < 1e-12:
        raise CoincidentEndpoints("connect endpoints coincide")
    rotation = rotation_aligning(_Z, direction / length)
    stretched = ExtentBox(
        (extent.lo[0], extent.lo[1], -length / 2),
        (extent.hi[0], extent.hi[1], length / 2),
    )
    return Frame.from_arrays((a + b) / 2, rotation), stretched


def _stretched_shape(shape: PrimitiveShape, length: float) -> PrimitiveShape:
    if shape.kind in ("cylinder", "cone", "disc"):
        return PrimitiveShape(shape.kind, (shape.dims[0], length))
    if len(shape.dims) == 3:
        return PrimitiveShape(shape.kind, (shape.dims[0], shape.dims[1], length))
    return shape


# ============================================================================
# Scene builder
# ============================================================================


class _SceneBuilder(FeatureLookup):
    def __init__(self, graph: ValidatedGraph):
        self.graph = graph
        self.expansions = {tid: exp.instance_ids for tid, exp in graph.expanded_instances.items()}
        self.poses: dict[str, tuple[Frame, ExtentBox]] = {}
        self.instances: dict[str, Instance] = {}
        self.anchors: dict[str, Anchor] = {}

    def _known(self, node_id: str) -> bool:
        return node_id in self.graph.nodes

    def pose(self, node_id: str) -> tuple[Frame, ExtentBox]:
        if node_id in self.poses:
            return self.poses[node_id]
        if node_id in self.expansions:
            ids = self.expansions[node_id]
            missing = [i for i in ids if i not in self.poses]
            if missing:
                raise ForwardReference(f"{node_id}: instances {missing} are not placed yet")
            return self._union_pose(ids)
        if node_id not in self.graph.nodes:
            raise UnknownTarget(f"unknown placement target {node_id!r}")
        if self.graph.is_group(node_id) and not self.graph.has_concrete_size(node_id):
            if all(d in self.poses or self._is_pending_group(d) for d in self._descendants(node_id)):
                self._place_auto_anchor(node_id)
                return self.poses[node_id]
        raise ForwardReference(f"{node_id!r} is referenced before it is placed")

    # --- hierarchy helpers ---

    def _descendants(self, node_id: str) -> list[str]:
        out: list[str] = []
        for child in self.graph.children(node_id):
            out.append(child)
            out.extend(self._descendants(child))
        return out

    def _is_pending_group(self, node_id: str) -> bool:
        if self.graph.is_group(node_id) and not self.graph.has_concrete_size(node_id):
            return True
        node = self.graph.nodes[node_id]
        return self.graph.method(node_id) in BOOLEAN_METHODS and node.tool_id != node_id

    def _union_pose(self, ids) -> tuple[Frame, ExtentBox]:
        boxes = []
        for i in ids:
            inst = self.instances.get(i)
            if inst is not None and inst.is_cutter:
                continue
            if i in self.poses:
                boxes.append(world_aabb(*self.poses[i]))
        if not boxes:
            return Frame(), ExtentBox((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        center = (lo + hi) / 2
        return Frame.from_arrays(center, np.eye(3)), ExtentBox.from_arrays(lo - center, hi - center)

    def _place_auto_anchor(self, node_id: str) -> None:
        for child in self.graph.children(node_id):
            if child not in self.poses and self.graph.is_group(child) and not self.graph.has_concrete_size(child):
                self._place_auto_anchor(child)
        frame, extent = self._union_pose(self._descendants(node_id))
        self.poses[node_id] = (frame, extent)
        self.anchors[node_id] = Anchor(node_id, frame, extent, True, self.graph.nodes[node_id].parent)
        logger.debug("auto anchor %s: extent %s", node_id, extent.size.tolist())

    # --- per node ---

    def place(self, node_id: str) -> None:
        node = self.graph.nodes[node_id]
        method = self.graph.method(node_id)
        if method in BOOLEAN_METHODS and node.tool_id != node_id:
            self._retag_tool(node, method)
            return

        is_anchor = method == "group"
        shape = shape_for(node.size, is_anchor=is_anchor)
        try:
            extent = extent_of(shape)
            frame, extent, shape = self._placement(node, shape, extent)
        except GraphCadError as exc:
            span = self.graph.span(node_id)
            if span is not None:
                exc.at(span.line, span.column)
            raise
        if not np.all(np.isfinite(frame.origin)):
            raise DegeneratePlacement(f"{node_id}: placement is not finite")
        self.poses[node_id] = (frame, extent)

        if is_anchor:
            self.anchors[node_id] = Anchor(node_id, frame, extent, False, node.parent)
            return
        csg = CsgRole()
        if method == "boolean_subtract":
            csg = CsgRole("cutter_of", node.target_id)
        elif method == "boolean_union":
            csg = CsgRole("union_member", node.target_id)
        self.instances[node_id] = Instance(
            id=node_id,
            class_name=node.node_type or "",
            shape=shape,
            frame=frame,
            extent=extent,
            material=node.mat,
            csg=csg,
            parent=node.parent,
            source=self.graph.template_of(node_id) or node_id,
        )

    def _retag_tool(self, node: NodeRecord, method: str) -> None:
        tool = self.instances.get(node.tool_id or "")
        if tool is None:
            raise ForwardReference(f"{node.id}: tool {node.tool_id!r} is not placed yet")
        if node.target_id not in self.poses:
            raise ForwardReference(f"{node.id}: target {node.target_id!r} is not placed yet")
        role = "cutter_of" if method == "boolean_subtract" else "union_member"
        self.instances[tool.id] = Instance(
            tool.id, tool.class_name, tool.shape, tool.frame, tool.extent,
            tool.material, CsgRole(role, node.target_id), tool.parent, tool.source,
        )

    def _placement(
        self, node: NodeRecord, shape: PrimitiveShape, extent: ExtentBox
    ) -> tuple[Frame, ExtentBox, PrimitiveShape]:
        if node.connect is not None and (node.align or node.pos is not None):
            raise DegeneratePlacement(f"{node.id}: connect cannot be combined with align/pos")

        rotation = np.eye(3)
        if node.orientation is not None:
            nominal = np.zeros(3)
            poses: dict[str, tuple[Frame, ExtentBox]] = {}
            if node.orientation.family != "axis":
                nominal = self._translate(node, Frame(), extent).apply(extent.center)
                try:
                    poses[node.orientation.target or ""] = self.pose(node.orientation.target or "")
                except ForwardReference:
                    pass
            rotation = resolve_orientation(node.orientation, OrientationContext(tuple(nominal), poses))
        if node.rotation is not None:
            rotation = rotation @ euler_matrix(node.rotation.rx, node.rotation.ry, node.rotation.rz)

        if node.connect is not None:
            a = self.feature_point(node.connect.a)
            b = self.feature_point(node.connect.b)
            frame, extent = apply_connect(extent, a, b)
            if node.rotation is not None:
                frame = Frame.from_arrays(frame.origin, frame.matrix @ euler_matrix(
                    node.rotation.rx, node.rotation.ry, node.rotation.rz))
            return frame, extent, _stretched_shape(shape, float(extent.size[2]))

        frame = self._translate(node, Frame.from_arrays(np.zeros(3), rotation), extent)
        return frame, extent, shape

    def _translate(self, node: NodeRecord, frame: Frame, extent: ExtentBox) -> Frame:
        for align in node.align:
            frame = frame.moved(apply_align(frame, extent, align, self))
        if node.pos is None:
            return frame
        basis = self.reference_frame(node.align[0].target).matrix if node.align else np.eye(3)
        if isinstance(node.pos, OffsetPos):
            local = np.array([node.pos.dx, node.pos.dy, node.pos.dz])
        else:
            assert isinstance(node.pos, PolarPos)
            theta = math.radians(node.pos.theta_deg)
            local = np.array([node.pos.dr * math.cos(theta), node.pos.dr * math.sin(theta), 0.0])
        return frame.moved(basis @ local)

    def finish(self) -> None:
        for node_id in self.graph.nodes:
            if node_id not in self.poses and self.graph.is_group(node_id):
                self._place_auto_anchor(node_id)

    def scene(self) -> ResolvedScene:
        provenance: dict[str, list[str]] = {}
        for inst in self.instances.values():
            provenance.setdefault(inst.source, []).append(inst.id)
        ordered_anchors = tuple(self.anchors[n] for n in self.graph.nodes if n in self.anchors)
        return ResolvedScene(
            instances=tuple(self.instances.values()),
            anchors=ordered_anchors,
            provenance={k: tuple(v) for k, v in provenance.items()},
            expansions=dict(self.expansions),
        )


def resolve_scene(graph: ValidatedGraph) -> ResolvedScene:
    """검증/전개된 그래프를 월드 포즈 인스턴스로"""
    graph = expand_patterns(graph)
    builder = _SceneBuilder(graph)
    for section in build_sections(graph):
        if section.kind == "validate":
            continue
        for node_id in section.members:
            builder.place(node_id)
    builder.finish()
    scene = builder.scene()
    logger.info("resolved %d instance(s), %d anchor(s)", len(scene.instances), len(scene.anchors))
    return scene


# ============================================================================
# Scene JSON
# ============================================================================


def _vec(values) -> list[float]:
    return [float(v) + 0.0 for v in values]


def scene_to_json(scene: ResolvedScene) -> dict[str, Any]:
    return {
        "instances": [
            {
                "id": inst.id,
                "class": inst.class_name,
                "kind": inst.shape.kind,
                "dims": _vec(inst.shape.dims),
                "position": _vec(inst.frame.origin),
                "rotation": quaternion_wxyz(inst.frame.matrix),
                "extent": inst.extent.to_dict(),
                "material": inst.material,
                "csg": inst.csg.to_dict(),
                "parent": inst.parent,
                "source": inst.source,
            }
            for inst in scene.instances
        ],
        "anchors": [
            {
                "id": anchor.id,
                "position": _vec(anchor.frame.origin),
                "rotation": quaternion_wxyz(anchor.frame.matrix),
                "extent": anchor.extent.to_dict(),
                "auto": anchor.auto,
                "parent": anchor.parent,
            }
            for anchor in scene.anchors
        ],
        "provenance": {k: list(v) for k, v in scene.provenance.items()},
        "expansions": {k: list(v) for k, v in scene.expansions.items()},
    }


def _frame_from_json(item: Mapping[str, Any]) -> Frame:
    return Frame.from_arrays(item["position"], matrix_from_quaternion(item.get("rotation", [1, 0, 0, 0])))


def _extent_from_json(item: Mapping[str, Any]) -> ExtentBox:
    extent = item["extent"]
    return ExtentBox.from_arrays(extent["min"], extent["max"])


def scene_from_json(doc: Mapping[str, Any]) -> ResolvedScene:
    """scene_to_json 결과(또는 외부 도구가 만든 동일 스키마)를 읽는다"""
    instances = []
    for item in doc.get("instances", []):
        csg = item.get("csg") or {}
        instances.append(
            Instance(
                id=item["id"],
                class_name=item.get("class", ""),
                shape=PrimitiveShape(item.get("kind", "cube"), tuple(item.get("dims", ()))),
                frame=_frame_from_json(item),
                extent=_extent_from_json(item),
                material=item.get("material"),
                csg=CsgRole(csg.get("role", "solid"), csg.get("of")),
                parent=item.get("parent"),
                source=item.get("source", item["id"]),
            )
        )
    anchors = [
        Anchor(item["id"], _frame_from_json(item), _extent_from_json(item), bool(item.get("auto")), item.get("parent"))
        for item in doc.get("anchors", [])
    ]
    return ResolvedScene(
        instances=tuple(instances),
        anchors=tuple(anchors),
        provenance={k: tuple(v) for k, v in doc.get("provenance", {}).items()},
        expansions={k: tuple(v) for k, v in doc.get("expansions", {}).items()},
    )
