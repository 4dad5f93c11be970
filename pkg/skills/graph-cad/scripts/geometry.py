#!/usr/bin/env python3
"""최소 기하 커널

강체 프레임, 프리미티브 로컬 extent box, 면 피처 위치, 축 정렬 회전.
메시가 아닌 oriented extent box 수준에서만 계산한다.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from graph_dsl import (
    AutoSize,
    BoxSize,
    CylinderSize,
    OrientationDirective,
    SizeSpec,
    SphereSize,
    canonical_feature,
)
from graph_errors import (
    DegenerateDirection,
    NonPositiveDimension,
    NonUnitInput,
    UnknownFeature,
    UnresolvedReference,
)

logger = logging.getLogger(__name__)

ANGLE_EPS = 1e-6
UNIT_EPS = 1e-6

AXIS_VECTORS = {
    "+X": (1.0, 0.0, 0.0),
    "-X": (-1.0, 0.0, 0.0),
    "+Y": (0.0, 1.0, 0.0),
    "-Y": (0.0, -1.0, 0.0),
    "+Z": (0.0, 0.0, 1.0),
    "-Z": (0.0, 0.0, -1.0),
}

# feature -> (축 index, 'min' | 'max')
FACE_AXES = {
    "left": (0, "min"),
    "right": (0, "max"),
    "back": (1, "min"),
    "front": (1, "max"),
    "bottom": (2, "min"),
    "top": (2, "max"),
}

SHAPE_KINDS = ("cube", "cylinder", "cone", "sphere", "hemisphere", "disc", "empty")


@dataclass(frozen=True)
class ExtentBox:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"extent min > max: {self.lo} {self.hi}")

    @classmethod
    def from_arrays(cls, lo, hi) -> "ExtentBox":
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in hi))  # type: ignore[arg-type]

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) * 0.5

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])],
            dtype=float,
        )

    def to_dict(self) -> dict:
        return {"min": [float(v) + 0.0 for v in self.lo], "max": [float(v) + 0.0 for v in self.hi]}


@dataclass(frozen=True)
class Frame:
    """로컬 -> 월드 변환 (world = R @ local + position)"""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[tuple[float, float, float], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    @classmethod
    def from_arrays(cls, position, rotation) -> "Frame":
        pos = tuple(float(v) for v in np.asarray(position, dtype=float))
        rot = tuple(tuple(float(v) for v in row) for row in np.asarray(rotation, dtype=float))
        return cls(pos, rot)  # type: ignore[arg-type]

    @property
    def origin(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=float)

    def apply(self, local_point) -> np.ndarray:
        return self.matrix @ np.asarray(local_point, dtype=float) + self.origin

    def compose(self, other: "Frame") -> "Frame":
        """self ∘ other"""
        return Frame.from_arrays(self.apply(other.origin), self.matrix @ other.matrix)

    def moved(self, delta) -> "Frame":
        return Frame.from_arrays(self.origin + np.asarray(delta, dtype=float), self.matrix)

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.matrix
        return bool(np.allclose(r.T @ r, np.eye(3), atol=tol) and abs(np.linalg.det(r) - 1.0) < tol)

    def is_axis_aligned(self, tol: float = 1e-9) -> bool:
        """회전이 축 순열(부호 포함)인지"""
        r = np.abs(self.matrix)
        return bool(np.all((r < tol) | (np.abs(r - 1.0) < tol)))


@dataclass(frozen=True)
class PrimitiveShape:
    kind: str
    dims: tuple[float, ...] = ()


def shape_for(size: SizeSpec | None, is_anchor: bool = False) -> PrimitiveShape:
    """SizeSpec -> PrimitiveShape"""
    if isinstance(size, BoxSize):
        return PrimitiveShape("empty" if is_anchor else "cube", (size.lx, size.ly, size.lz))
    if isinstance(size, CylinderSize):
        return PrimitiveShape(size.kind, (size.d, size.h))
    if isinstance(size, SphereSize):
        return PrimitiveShape(size.kind, (size.d,))
    if size is None or isinstance(size, AutoSize):
        return PrimitiveShape("empty", ())
    raise TypeError(f"unsupported size spec: {size!r}")


def extent_of(shape: PrimitiveShape) -> ExtentBox:
    """프리미티브의 로컬 extent box (원점 중심, hemisphere 는 Z∈[0, d/2])"""
    if shape.kind not in SHAPE_KINDS:
        raise NonPositiveDimension(f"unknown primitive kind: {shape.kind}")
    dims = tuple(float(d) for d in shape.dims)
    if shape.kind == "empty":
        if not dims:
            return ExtentBox((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
        if any(d < 0 for d in dims):
            raise NonPositiveDimension(f"negative anchor size: {dims}")
    elif not dims or any(d <= 0 for d in dims):
        raise NonPositiveDimension(f"{shape.kind} dimensions must be > 0: {dims}")

    if shape.kind in ("cube", "empty"):
        if len(dims) != 3:
            raise NonPositiveDimension(f"{shape.kind} expects 3 dimensions: {dims}")
        half = tuple(d / 2 for d in dims)
        return ExtentBox(tuple(-h for h in half), half)  # type: ignore[arg-type]
    if shape.kind in ("cylinder", "cone", "disc"):
        d, h = dims
        return ExtentBox((-d / 2, -d / 2, -h / 2), (d / 2, d / 2, h / 2))
    (d,) = dims[:1]
    if shape.kind == "sphere":
        return ExtentBox((-d / 2, -d / 2, -d / 2), (d / 2, d / 2, d / 2))
    return ExtentBox((-d / 2, -d / 2, 0.0), (d / 2, d / 2, d / 2))


def feature_name(token: str) -> str:
    name = canonical_feature(token)
    if name is None:
        raise UnknownFeature(f"unknown feature: {token!r}")
    return name


def face_center_local(extent: ExtentBox, feature: str) -> np.ndarray:
    name = feature_name(feature)
    point = extent.center
    if name == "center":
        return point
    axis, end = FACE_AXES[name]
    point[axis] = extent.lo[axis] if end == "min" else extent.hi[axis]
    return point


def face_center_world(frame: Frame, extent: ExtentBox, feature: str) -> np.ndarray:
    """면 중심(또는 center)을 월드 좌표로"""
    return frame.apply(face_center_local(extent, feature))


def face_normal_local(feature: str) -> np.ndarray:
    name = feature_name(feature)
    if name == "center":
        raise UnknownFeature("center has no normal")
    axis, end = FACE_AXES[name]
    normal = np.zeros(3)
    normal[axis] = -1.0 if end == "min" else 1.0
    return normal


def face_patch(extent: ExtentBox, feature: str) -> ExtentBox:
    """면을 두께 0 박스로 (center 는 박스 그대로)"""
    name = feature_name(feature)
    if name == "center":
        return extent
    axis, end = FACE_AXES[name]
    value = extent.lo[axis] if end == "min" else extent.hi[axis]
    lo, hi = list(extent.lo), list(extent.hi)
    lo[axis] = hi[axis] = value
    return ExtentBox(tuple(lo), tuple(hi))  # type: ignore[arg-type]


def _check_unit(vec: np.ndarray, what: str) -> None:
    norm = float(np.linalg.norm(vec))
    if not math.isfinite(norm) or abs(norm - 1.0) > UNIT_EPS:
        raise NonUnitInput(f"{what} must be a unit vector (|v| = {norm:.9g})")


def rotation_aligning(local_axis: Sequence[float], target: Sequence[float]) -> np.ndarray:
    """local_axis 를 target 으로 보내는 최소 회전 (3x3)"""
    u = np.asarray(local_axis, dtype=float)
    v = np.asarray(target, dtype=float)
    _check_unit(u, "local_axis")
    _check_unit(v, "target")
    cross = np.cross(u, v)
    angle = math.atan2(float(np.linalg.norm(cross)), float(np.dot(u, v)))
    if angle < ANGLE_EPS:
        return np.eye(3)
    if abs(angle - math.pi) < ANGLE_EPS:
        helper = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.99 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(helper, u)
    else:
        axis = cross
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def euler_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    """도 단위 XYZ 외부축 오일러 회전"""
    return Rotation.from_euler("xyz", [rx, ry, rz], degrees=True).as_matrix()


def quaternion_wxyz(matrix: np.ndarray) -> list[float]:
    """회전 행렬 -> [w, x, y, z] (w >= 0)"""
    x, y, z, w = Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_quat()
    quat = np.array([w, x, y, z])
    if quat[0] < 0:
        quat = -quat
    return [float(v) + 0.0 for v in quat]


def matrix_from_quaternion(wxyz: Sequence[float]) -> np.ndarray:
    w, x, y, z = wxyz
    return Rotation.from_quat([x, y, z, w]).as_matrix()


@dataclass(frozen=True)
class OrientationContext:
    """orientation 해석에 필요한 상태: 이 노드의 명목 위치와 이미 배치된 포즈들"""

    nominal_position: tuple[float, float, float]
    poses: Mapping[str, tuple[Frame, ExtentBox]]

    def pose(self, node_id: str) -> tuple[Frame, ExtentBox]:
        pose = self.poses.get(node_id)
        if pose is None:
            raise UnresolvedReference(f"orientation reference {node_id!r} is not resolved")
        return pose


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise DegenerateDirection(f"{what} has zero length")
    return vec / norm


def nearest_face_normal(frame: Frame, extent: ExtentBox, point) -> np.ndarray:
    """point 에 가장 가까운 면의 월드 법선 (half-extent 대비 비율 최대 축)"""
    local = frame.matrix.T @ (np.asarray(point, dtype=float) - frame.origin) - extent.center
    half = extent.size / 2
    ratios = np.array([
        abs(local[i]) / half[i] if half[i] > 0 else (math.inf if abs(local[i]) > 1e-12 else 0.0)
        for i in range(3)
    ])
    if not np.any(ratios > 0):
        raise DegenerateDirection("point coincides with the reference centre")
    axis = int(np.argmax(ratios))
    normal = np.zeros(3)
    normal[axis] = 1.0 if local[axis] > 0 else -1.0
    return frame.matrix @ normal


def resolve_orientation(directive: OrientationDirective, context: OrientationContext) -> np.ndarray:
    """orientation 지시자 -> 회전 행렬 (로컬 +Z 재매핑)"""
    z = np.array([0.0, 0.0, 1.0])
    nominal = np.asarray(context.nominal_position, dtype=float)
    family = directive.family
    if family == "axis":
        return rotation_aligning(z, AXIS_VECTORS[directive.axis or "+Z"])
    if family == "radial_from":
        ref, _ = context.pose(directive.target or "")
        direction = _unit(nominal - ref.origin, "radial direction")
        return rotation_aligning(z, direction)
    if family == "tangent_to":
        ref, _ = context.pose(directive.target or "")
        ref_z = ref.matrix[:, 2]
        radial = nominal - ref.origin
        radial = radial - float(np.dot(radial, ref_z)) * ref_z
        radial = _unit(radial, "radial direction")
        return rotation_aligning(z, _unit(np.cross(ref_z, radial), "tangent direction"))
    if family == "normal_to":
        ref, extent = context.pose(directive.target or "")
        normal = nearest_face_normal(ref, extent, nominal)
        return rotation_aligning(face_normal_local(directive.face or "+Z_face"), normal)
    if family == "face_align":
        ref, _ = context.pose(directive.target or "")
        target_normal = ref.matrix @ face_normal_local(directive.target_face or "+Z_face")
        return rotation_aligning(face_normal_local(directive.face or "+Z_face"), target_normal)
    raise DegenerateDirection(f"unsupported orientation family: {family}")


def world_aabb(frame: Frame, extent: ExtentBox) -> tuple[np.ndarray, np.ndarray]:
    pts = np.array([frame.apply(c) for c in extent.corners()])
    return pts.min(axis=0), pts.max(axis=0)


def _aabb_gap(a: tuple[np.ndarray, np.ndarray], b: tuple[np.ndarray, np.ndarray]) -> float:
    sep = np.maximum(0.0, np.maximum(b[0] - a[1], a[0] - b[1]))
    return float(np.linalg.norm(sep))


def box_gap(frame_a: Frame, extent_a: ExtentBox, frame_b: Frame, extent_b: ExtentBox) -> float:
    """두 oriented box 사이 최소 거리 (겹치면 0)"""
    if frame_a.is_axis_aligned() and frame_b.is_axis_aligned():
        return _aabb_gap(world_aabb(frame_a, extent_a), world_aabb(frame_b, extent_b))

    bounds = list(zip(extent_a.lo, extent_a.hi)) + list(zip(extent_b.lo, extent_b.hi))
    x0 = np.concatenate([extent_a.center, extent_b.center])

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        diff = frame_a.apply(x[:3]) - frame_b.apply(x[3:])
        grad = np.concatenate([2 * frame_a.matrix.T @ diff, -2 * frame_b.matrix.T @ diff])
        return float(diff @ diff), grad

    result = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=bounds)
    gap = math.sqrt(max(0.0, float(result.fun)))
    logger.debug("oriented box gap %.3g (%s)", gap, result.message)
    return gap
