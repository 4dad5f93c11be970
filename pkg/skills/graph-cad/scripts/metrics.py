#!/usr/bin/env python3
"""그래프 평가 지표

NLA : 클래스별 비용 행렬 + 헝가리안 매칭의 평균 L1 비용 (낮을수록 좋음)
HLA : 계층 간선 F1 과 깊이 일치도의 가중 합
GCS : 해석된 장면 위에서 기하 제약을 0/1 로 판정한 평균

이름 매핑은 결정적 정규화 규칙(default_alias_mapping)을 기본으로 하며
외부에서 만든 매핑(JSON)도 같은 인터페이스로 받는다.
"""
from __future__ import annotations

import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from geometry import AXIS_VECTORS, ExtentBox, Frame, box_gap, face_patch, world_aabb
from graph_core import ValidatedGraph, expand_patterns
from graph_dsl import BOOLEAN_METHODS, BoxSize, CylinderSize, OffsetPos, PolarPos, canonical_feature
from graph_errors import EmptyMatrix, GraphCadError, InvalidConfig, UnmappablePartName, ZeroScale
from resolver import ResolvedScene, resolve_scene

logger = logging.getLogger(__name__)

ORIENTATIONS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
GCS_KINDS = ("contact", "above", "below", "aligned_axis", "relative_orientation")


@dataclass(frozen=True)
class MetricWeights:
    w_s: float = 0.25
    w_p: float = 0.25
    w_o: float = 0.25
    w_a: float = 0.25
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("w_s", "w_p", "w_o", "w_a", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidConfig(f"metric weight {name} must be >= 0, got {value}")


@dataclass(frozen=True)
class HlaConfig:
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class NodeDescriptor:
    id: str
    class_name: str
    size: tuple[float, float, float] = (0.0, 0.0, 0.0)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: str = "+Z"
    material: str | None = None

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}: {self.orientation!r}")


# ============================================================================
# Name mapping
# ============================================================================


def normalize_name(name: str) -> str:
    """소문자화 + [k] 인덱스 제거 + 영숫자 이외 제거"""
    return re.sub(r"[^0-9a-z]", "", re.sub(r"\[\d+\]", "", name.lower()))


@dataclass(frozen=True)
class AliasMapping:
    """pred_id -> gt_id 단사 부분 매핑"""

    pairs: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        images = list(self.pairs.values())
        if len(images) != len(set(images)):
            raise InvalidConfig("alias mapping must be one-to-one")

    def get(self, pred_id: str) -> str | None:
        return self.pairs.get(pred_id)

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def identity(cls, ids: Iterable[str]) -> "AliasMapping":
        return cls({i: i for i in ids})

    @classmethod
    def from_json(cls, doc: Mapping[str, Any], gt_ids: Iterable[str] | None = None) -> "AliasMapping":
        """{"pred_id": "gt_id", ...} 또는 {"mapping": {...}}"""
        pairs = doc.get("mapping", doc)
        if not isinstance(pairs, Mapping) or not all(isinstance(v, str) for v in pairs.values()):
            raise InvalidConfig("mapping file must be an object of pred_id -> gt_id strings")
        if gt_ids is not None:
            known = set(gt_ids)
            unknown = sorted(v for v in pairs.values() if v not in known)
            if unknown:
                raise InvalidConfig(f"mapping targets are not GT ids: {', '.join(unknown)}")
        return cls(dict(pairs))

    def to_dict(self) -> dict[str, str]:
        return dict(self.pairs)


@dataclass(frozen=True)
class _NameEntry:
    id: str
    class_name: str
    position: np.ndarray | None


def _scene_or_none(graph: ValidatedGraph) -> ResolvedScene | None:
    try:
        return resolve_scene(graph)
    except GraphCadError as exc:
        logger.warning("scene could not be resolved (%s); falling back to declared positions", exc)
        return None


def _name_entries(source: Union[ValidatedGraph, Sequence[NodeDescriptor]]) -> list[_NameEntry]:
    if not isinstance(source, ValidatedGraph):
        return [_NameEntry(d.id, d.class_name, np.asarray(d.position, dtype=float)) for d in source]
    graph = expand_patterns(source)
    scene = _scene_or_none(graph)
    entries = []
    for nid, node in graph.nodes.items():
        position = None
        if scene is not None and scene.has(nid):
            position = scene.pose(nid)[0].origin
        entries.append(_NameEntry(nid, node.node_type or "", position))
    return entries


def default_alias_mapping(
    gt: Union[ValidatedGraph, Sequence[NodeDescriptor]],
    pred: Union[ValidatedGraph, Sequence[NodeDescriptor]],
) -> AliasMapping:
    """정확 일치 -> 정규화 일치 -> 클래스별 최근접 위치 그리디"""
    gt_entries = _name_entries(gt)
    pred_entries = _name_entries(pred)
    pairs: dict[str, str] = {}
    used: set[str] = set()

    gt_ids = {e.id for e in gt_entries}
    for entry in pred_entries:
        if entry.id in gt_ids:
            pairs[entry.id] = entry.id
            used.add(entry.id)

    by_norm: dict[str, list[str]] = {}
    for entry in gt_entries:
        if entry.id not in used:
            by_norm.setdefault(normalize_name(entry.id), []).append(entry.id)
    for entry in pred_entries:
        if entry.id in pairs:
            continue
        candidates = [g for g in by_norm.get(normalize_name(entry.id), []) if g not in used]
        if len(candidates) == 1:
            pairs[entry.id] = candidates[0]
            used.add(candidates[0])

    ranked = []
    for pi, p in enumerate(pred_entries):
        if p.id in pairs:
            continue
        for gi, g in enumerate(gt_entries):
            if g.id in used or g.class_name != p.class_name:
                continue
            if p.position is None or g.position is None:
                dist = math.inf
            else:
                dist = float(np.linalg.norm(p.position - g.position))
            ranked.append((dist, pi, gi))
    for _, pi, gi in sorted(ranked):
        p, g = pred_entries[pi], gt_entries[gi]
        if p.id not in pairs and g.id not in used:
            pairs[p.id] = g.id
            used.add(g.id)

    logger.debug("alias mapping: %d of %d pred node(s) mapped", len(pairs), len(pred_entries))
    return AliasMapping(pairs)


# ============================================================================
# NLA
# ============================================================================


def _size_vec(size) -> tuple[float, float, float]:
    if isinstance(size, BoxSize):
        return (size.lx, size.ly, size.lz)
    if isinstance(size, CylinderSize):
        return (size.d, size.d, size.h)
    return (0.0, 0.0, 0.0)


def _declared_position(pos) -> tuple[float, float, float]:
    if isinstance(pos, OffsetPos):
        return (pos.dx, pos.dy, pos.dz)
    if isinstance(pos, PolarPos):
        theta = math.radians(pos.theta_deg)
        return (pos.dr * math.cos(theta), pos.dr * math.sin(theta), 0.0)
    return (0.0, 0.0, 0.0)


def node_descriptors(graph: ValidatedGraph, scene: ResolvedScene | None = None) -> list[NodeDescriptor]:
    """그룹/불리언 연산 레코드를 제외한 부품 노드의 기술자"""
    graph = expand_patterns(graph)
    scene = scene if scene is not None else _scene_or_none(graph)
    descriptors = []
    for nid, node in graph.nodes.items():
        method = graph.method(nid)
        if method == "group" or (method in BOOLEAN_METHODS and node.tool_id != nid):
            continue
        if scene is not None and scene.has(nid):
            position = tuple(float(v) for v in scene.pose(nid)[0].origin)
        else:
            position = _declared_position(node.pos)
        orientation = "+Z"
        if node.orientation is not None and node.orientation.family == "axis" and node.orientation.axis:
            orientation = node.orientation.axis
        descriptors.append(NodeDescriptor(
            id=nid,
            class_name=node.node_type or "",
            size=_size_vec(node.size),
            position=position,  # type: ignore[arg-type]
            orientation=orientation,
            material=node.mat,
        ))
    return descriptors


def global_scale(gt_nodes: Iterable[NodeDescriptor]) -> float:
    return max((max(n.size) for n in gt_nodes), default=0.0)


def _angle_deg(a: str, b: str) -> float:
    cos = float(np.clip(np.dot(AXIS_VECTORS[a], AXIS_VECTORS[b]), -1.0, 1.0))
    return math.degrees(math.acos(cos))


def build_cost_matrix(
    pred_nodes: Sequence[NodeDescriptor],
    gt_nodes: Sequence[NodeDescriptor],
    s_max: float,
    weights: MetricWeights,
) -> np.ndarray:
    """C[i, j] = 크기 L1 + 위치 L1 + 방향 각도 + 재질 불일치 벌점"""
    if s_max <= 0:
        raise ZeroScale("global GT scale is 0")
    pos_scale = max(1.0, s_max)
    cost = np.zeros((len(pred_nodes), len(gt_nodes)))
    for i, p in enumerate(pred_nodes):
        for j, g in enumerate(gt_nodes):
            size_term = float(np.abs(np.subtract(p.size, g.size)).sum()) / s_max
            pos_term = float(np.abs(np.subtract(p.position, g.position)).sum()) / pos_scale
            ori_term = _angle_deg(p.orientation, g.orientation) / 180.0
            attr_term = 0.0
            if p.material and g.material and p.material != g.material:
                attr_term = weights.gamma
            cost[i, j] = (
                weights.w_s * size_term + weights.w_p * pos_term + weights.w_o * ori_term + weights.w_a * attr_term
            )
    return cost


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def hungarian(matrix) -> Assignment:
    """최소 비용 할당 (min(rows, cols) 쌍)"""
    cost = np.asarray(matrix, dtype=float)
    if cost.ndim != 2 or cost.size == 0:
        raise EmptyMatrix("cost matrix is empty")
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple((int(r), int(c)) for r, c in zip(rows, cols))
    return Assignment(pairs, float(cost[rows, cols].sum()))


@dataclass(frozen=True)
class NlaResult:
    score: float
    pairs: tuple[tuple[str, str, float], ...]
    total_cost: float
    unmatched_pred: tuple[str, ...] = ()
    unmatched_gt: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "score": self.score,
            "total_cost": self.total_cost,
            "pairs": [{"pred": p, "gt": g, "cost": c} for p, g, c in self.pairs],
            "matched": len(self.pairs),
            "unmatched_pred": list(self.unmatched_pred),
            "unmatched_gt": list(self.unmatched_gt),
        }


def nla_from_descriptors(
    gt_nodes: Sequence[NodeDescriptor],
    pred_nodes: Sequence[NodeDescriptor],
    mapping: AliasMapping,
    weights: MetricWeights,
) -> NlaResult:
    gt_class = {n.id: n.class_name for n in gt_nodes}
    renamed = []
    for node in pred_nodes:
        target = mapping.get(node.id)
        if target is not None and target in gt_class:
            node = NodeDescriptor(target, gt_class[target], node.size, node.position, node.orientation, node.material)
        renamed.append(node)

    s_max = global_scale(gt_nodes)
    total = 0.0
    pairs: list[tuple[str, str, float]] = []
    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    for cls in dict.fromkeys(n.class_name for n in gt_nodes):
        gi = [i for i, n in enumerate(gt_nodes) if n.class_name == cls]
        pi = [i for i, n in enumerate(renamed) if n.class_name == cls]
        if not gi or not pi:
            continue
        cost = build_cost_matrix([renamed[i] for i in pi], [gt_nodes[i] for i in gi], s_max, weights)
        assignment = hungarian(cost)
        for r, c in assignment.pairs:
            pairs.append((pred_nodes[pi[r]].id, gt_nodes[gi[c]].id, float(cost[r, c])))
            matched_pred.add(pi[r])
            matched_gt.add(gi[c])
        total += assignment.total_cost

    return NlaResult(
        score=total / max(1, len(pairs)),
        pairs=tuple(pairs),
        total_cost=total,
        unmatched_pred=tuple(n.id for i, n in enumerate(pred_nodes) if i not in matched_pred),
        unmatched_gt=tuple(n.id for i, n in enumerate(gt_nodes) if i not in matched_gt),
    )


def nla(
    gt_graph: ValidatedGraph,
    pred_graph: ValidatedGraph,
    mapping: AliasMapping | None = None,
    weights: MetricWeights | None = None,
) -> NlaResult:
    """평균 할당 비용 (GT 기준 정규화)"""
    gt_nodes = node_descriptors(gt_graph)
    pred_nodes = node_descriptors(pred_graph)
    if mapping is None:
        mapping = default_alias_mapping(gt_nodes, pred_nodes)
    return nla_from_descriptors(gt_nodes, pred_nodes, mapping, weights or MetricWeights())


# ============================================================================
# HLA
# ============================================================================


@dataclass(frozen=True)
class Hierarchy:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    layers: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: ValidatedGraph) -> "Hierarchy":
        graph = expand_patterns(graph)
        return cls(
            tuple(graph.nodes),
            tuple(graph.parent_edges),
            {nid: node.layer for nid, node in graph.nodes.items()},
        )


def compute_depths(hierarchy: Hierarchy) -> dict[str, int]:
    """루트(자식으로 등장하지 않는 노드)로부터 BFS 깊이, 미도달 노드는 0"""
    nodes = list(dict.fromkeys(list(hierarchy.nodes) + [v for e in hierarchy.edges for v in e]))
    children = {v for _, v in hierarchy.edges}
    roots = [n for n in nodes if n not in children]
    if not roots:
        roots = [n for n in nodes if hierarchy.layers.get(n) == 0] or nodes

    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in hierarchy.edges:
        succ[u].append(v)
    depth = {n: 0 for n in roots}
    queue = deque(roots)
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if v not in depth:
                depth[v] = depth[u] + 1
                queue.append(v)
    return {n: depth.get(n, 0) for n in nodes}


def edge_f1(
    pred_edges: Iterable[tuple[str, str]],
    gt_edges: Iterable[tuple[str, str]],
    mapping: AliasMapping,
) -> float:
    pred = set(pred_edges)
    gt = set(gt_edges)
    hits = 0
    for u, v in pred:
        mu, mv = mapping.get(u), mapping.get(v)
        if mu is not None and mv is not None and (mu, mv) in gt:
            hits += 1
    precision = hits / len(pred) if pred else 0.0
    recall = hits / len(gt) if gt else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def depth_consistency(
    pred_depths: Mapping[str, int],
    gt_depths: Mapping[str, int],
    mapping: AliasMapping,
) -> float:
    scores = []
    for node, depth in pred_depths.items():
        target = mapping.get(node)
        if target is not None and target in gt_depths:
            scores.append(math.exp(-abs(depth - gt_depths[target])))
    return sum(scores) / len(scores) if scores else 0.0


@dataclass(frozen=True)
class HlaResult:
    hla: float
    edge_f1: float
    depth_score: float

    def to_dict(self) -> dict[str, float]:
        return {"hla": self.hla, "edge_f1": self.edge_f1, "depth_score": self.depth_score}


def hla(
    gt: Union[ValidatedGraph, Hierarchy],
    pred: Union[ValidatedGraph, Hierarchy],
    mapping: AliasMapping | None = None,
    config: HlaConfig | None = None,
) -> HlaResult:
    """α·EdgeF1 + (1−α)·DepthScore"""
    config = config or HlaConfig()
    if mapping is None:
        if isinstance(gt, Hierarchy) or isinstance(pred, Hierarchy):
            gt_ids = gt.nodes if isinstance(gt, Hierarchy) else tuple(gt.nodes)
            pred_ids = pred.nodes if isinstance(pred, Hierarchy) else tuple(pred.nodes)
            mapping = AliasMapping({i: i for i in pred_ids if i in set(gt_ids)})
        else:
            mapping = default_alias_mapping(gt, pred)
    gt_h = gt if isinstance(gt, Hierarchy) else Hierarchy.from_graph(gt)
    pred_h = pred if isinstance(pred, Hierarchy) else Hierarchy.from_graph(pred)

    f1 = edge_f1(pred_h.edges, gt_h.edges, mapping)
    depth = depth_consistency(compute_depths(pred_h), compute_depths(gt_h), mapping)
    return HlaResult(config.alpha * f1 + (1 - config.alpha) * depth, f1, depth)


# ============================================================================
# GCS
# ============================================================================


@dataclass(frozen=True)
class GcsConstraint:
    kind: str
    part_a: str
    part_b: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in GCS_KINDS:
            raise InvalidConfig(f"unknown GCS constraint kind {self.kind!r}")
        for key in ("tol", "tol_deg"):
            if key in self.params and not float(self.params[key]) > 0:
                raise InvalidConfig(f"{self.kind}: {key} must be > 0")

    @classmethod
    def from_json(cls, item: Mapping[str, Any]) -> "GcsConstraint":
        params = {k: v for k, v in item.items() if k not in ("kind", "a", "b")}
        try:
            return cls(item["kind"], item["a"], item["b"], params)
        except KeyError as exc:
            raise InvalidConfig(f"constraint is missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "a": self.part_a, "b": self.part_b, **self.params}


def load_constraints(doc: Mapping[str, Any] | Sequence[Mapping[str, Any]]) -> list[GcsConstraint]:
    items = doc.get("constraints", []) if isinstance(doc, Mapping) else doc
    return [GcsConstraint.from_json(item) for item in items]


@dataclass(frozen=True)
class GcsTolerances:
    contact: float = 1e-3
    aligned: float = 1e-3
    orientation_deg: float = 5.0


NameMapper = Callable[[str, Sequence[str]], str]


def default_name_mapper(name: str, part_ids: Sequence[str]) -> str:
    """제약의 부품 이름 -> 장면 id (정확 일치, 아니면 유일한 정규화 일치)"""
    if name in part_ids:
        return name
    key = normalize_name(name)
    matches = [p for p in part_ids if normalize_name(p) == key]
    if len(matches) == 1:
        return matches[0]
    reason = "ambiguous" if matches else "no match"
    raise UnmappablePartName(f"part {name!r} cannot be mapped to the scene ({reason})")


def _split_part(token: str) -> tuple[str, str | None]:
    if "." in token:
        head, tail = token.rsplit(".", 1)
        if canonical_feature(tail) is not None:
            return head, canonical_feature(tail)
    return token, None


def _part_box(parts: Mapping[str, tuple[Frame, ExtentBox]], part: str, feature: str | None):
    frame, extent = parts[part]
    if feature is not None:
        extent = face_patch(extent, feature)
    return frame, extent


def _xy_overlap(a, b, tol: float) -> bool:
    return bool(np.all(a[0][:2] <= b[1][:2] + tol) and np.all(b[0][:2] <= a[1][:2] + tol))


def _check(constraint: GcsConstraint, box_a, box_b, tolerances: GcsTolerances) -> bool:
    params = constraint.params
    kind = constraint.kind
    if kind == "contact":
        return box_gap(*box_a, *box_b) <= float(params.get("tol", tolerances.contact))
    aabb_a, aabb_b = world_aabb(*box_a), world_aabb(*box_b)
    if kind in ("above", "below"):
        za = (aabb_a[0][2] + aabb_a[1][2]) / 2
        zb = (aabb_b[0][2] + aabb_b[1][2]) / 2
        ordered = za > zb if kind == "above" else za < zb
        return bool(ordered) and _xy_overlap(aabb_a, aabb_b, float(params.get("tol", 0.0)))
    if kind == "aligned_axis":
        axis = "XYZ".index(str(params.get("axis", "Z")).upper().lstrip("+-"))
        ca = (aabb_a[0] + aabb_a[1]) / 2
        cb = (aabb_b[0] + aabb_b[1]) / 2
        others = [i for i in range(3) if i != axis]
        tol = float(params.get("tol", tolerances.aligned))
        return bool(np.all(np.abs(ca[others] - cb[others]) <= tol))
    # relative_orientation
    va = box_a[0].matrix @ np.asarray(AXIS_VECTORS[params.get("axis_a", "+Z")])
    vb = box_b[0].matrix @ np.asarray(AXIS_VECTORS[params.get("axis_b", "+Z")])
    angle = math.degrees(math.acos(float(np.clip(np.dot(va, vb), -1.0, 1.0))))
    target = float(params.get("angle_deg", 0.0))
    return abs(angle - target) <= float(params.get("tol_deg", tolerances.orientation_deg))


@dataclass(frozen=True)
class GcsResult:
    bits: tuple[dict[str, Any], ...]
    score: float | None
    status: str
    skipped: tuple[dict[str, Any], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "score": self.score,
            "bits": list(self.bits),
            "skipped": list(self.skipped),
        }


def gcs_eval(
    scene: ResolvedScene,
    constraints: Sequence[GcsConstraint],
    name_mapper: NameMapper | None = None,
    tolerances: GcsTolerances | None = None,
) -> GcsResult:
    """제약별 0/1 판정과 표본 평균"""
    mapper = name_mapper or default_name_mapper
    tolerances = tolerances or GcsTolerances()
    parts = scene.parts()
    part_ids = list(parts)
    bits: list[dict[str, Any]] = []
    skipped: list[dict[str, Any]] = []
    for index, constraint in enumerate(constraints):
        name_a, feat_a = _split_part(constraint.part_a)
        name_b, feat_b = _split_part(constraint.part_b)
        try:
            id_a = mapper(name_a, part_ids)
            id_b = mapper(name_b, part_ids)
        except UnmappablePartName as exc:
            logger.warning("constraint %d skipped: %s", index, exc)
            skipped.append({"index": index, "constraint": constraint.to_dict(), "reason": exc.to_dict()})
            continue
        passed = _check(
            constraint, _part_box(parts, id_a, feat_a), _part_box(parts, id_b, feat_b), tolerances
        )
        bits.append({"index": index, "kind": constraint.kind, "a": id_a, "b": id_b, "bit": int(passed)})

    if not bits:
        return GcsResult((), None, "no constraints", tuple(skipped))
    score = sum(b["bit"] for b in bits) / len(bits)
    return GcsResult(tuple(bits), score, "ok", tuple(skipped))


def corpus_mean(scores: Iterable[float | None]) -> float | None:
    """표본 점수 평균 (None 은 제외)"""
    values = [s for s in scores if s is not None]
    return sum(values) / len(values) if values else None
