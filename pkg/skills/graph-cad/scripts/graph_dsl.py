#!/usr/bin/env python3
"""분해 그래프 DSL 파서/직렬화

MATERIAL LIBRARY 블록과 BEGIN_GRAPH ~ END_GRAPH 레코드 블록을 읽어 GraphAst 로 만든다.
레코드 형식:

    L1: id=leg_fl | parent=dining_table | type=Leg
        | size=box(0.08,0.08,0.72)
        | align=Align leg_fl.top_face to tabletop.bottom_face | pos=offset(-0.96,0.46,0)
        ...

길이는 모두 미터, 각도는 모두 도(degree) 단위이며 파서는 단위 변환을 하지 않는다.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from graph_errors import (
    DslSyntaxError,
    DuplicateKey,
    DuplicateMaterialName,
    DuplicateNodeId,
    GraphCadError,
    MalformedRgba,
    MissingIdField,
    UnknownDirective,
    UnknownFeatureName,
    UnknownKey,
    UnterminatedBlock,
)

logger = logging.getLogger(__name__)

MATERIAL_HEADER = "-- MATERIAL LIBRARY --"
MATERIAL_END = "#END_MATERIALS"
GRAPH_BEGIN = "# ----------  BEGIN_GRAPH  ----------"
GRAPH_END = "# ----------  END_GRAPH  ----------"

_MATERIAL_HEADER_RE = re.compile(r"^-+\s*MATERIAL\s+LIBRARY\s*-+$", re.I)
_GRAPH_BEGIN_RE = re.compile(r"^#[\s-]*BEGIN_GRAPH[\s-]*$")
_GRAPH_END_RE = re.compile(r"^#[\s-]*END_GRAPH[\s-]*$")
_RECORD_RE = re.compile(r"^L(\d+)\s*:\s*(.*)$")

ID_PATTERN = r"[A-Za-z_][A-Za-z0-9_\-]*(?:\[\d+\])?"
_ID_RE = re.compile(rf"^{ID_PATTERN}$")
_NUM_RE = re.compile(r"^[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?$")
_INT_RE = re.compile(r"^[-+]?\d+$")
_REF_RE = re.compile(
    r"^(?P<node>[A-Za-z_][A-Za-z0-9_\-]*)(?:\[(?P<sel>\*|\d+)\])?(?:\.(?P<feat>[+-]?[A-Za-z_]+))?$"
)
_ALIGN_RE = re.compile(
    r"^align\s*(?:\(\s*(?P<axes>[^)]*)\))?\s+(?P<this>\S+)\s+to\s+(?P<target>.+)$", re.I
)
_AXIS_TOKEN_RE = re.compile(r"^([+-]?)([XYZxyz])$")

CREATE_METHODS = (
    "primitive",
    "boolean_subtract",
    "boolean_union",
    "group",
    "extrude_from_sketch",
    "auto_connect",
)
BOOLEAN_METHODS = ("boolean_subtract", "boolean_union")

FEATURE_NAMES = ("left", "right", "front", "back", "top", "bottom", "center")
_SIGNED_FACES = {"+x": "right", "-x": "left", "+y": "front", "-y": "back", "+z": "top", "-z": "bottom"}

# 레코드 키 (직렬화 순서)
RECORD_KEYS = (
    "id", "parent", "type", "size", "align", "pos", "connect", "orientation", "rotation",
    "mat", "create_method", "assembly_order", "constraint", "after", "depends_on",
    "tool_id", "target_id", "pattern",
)


def canonical_feature(token: str) -> str | None:
    """피처 토큰을 left/right/front/back/top/bottom/center 중 하나로 정규화"""
    key = token.strip().lower()
    if key.endswith("_face"):
        key = key[: -len("_face")]
    if key in FEATURE_NAMES:
        return key
    return _SIGNED_FACES.get(key)


def format_number(value: float) -> str:
    """최단 왕복 10진 표기 (정수값은 정수로)"""
    value = float(value)
    if value == 0:
        return "0"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def format_vector(values) -> str:
    return ", ".join(format_number(v) for v in values)


# ============================================================================
# Domain types
# ============================================================================


@dataclass(frozen=True)
class MaterialDef:
    name: str
    rgba: tuple[float, float, float, float]


@dataclass(frozen=True)
class BoxSize:
    lx: float
    ly: float
    lz: float

    def to_text(self) -> str:
        return f"box({format_number(self.lx)},{format_number(self.ly)},{format_number(self.lz)})"


@dataclass(frozen=True)
class CylinderSize:
    """(지름, 높이) 계열: cylinder / cone / disc"""

    d: float
    h: float
    kind: str = "cylinder"

    def to_text(self) -> str:
        return f"{self.kind}({format_number(self.d)},{format_number(self.h)})"


@dataclass(frozen=True)
class SphereSize:
    """지름 계열: sphere / hemisphere"""

    d: float
    kind: str = "sphere"

    def to_text(self) -> str:
        return f"{self.kind}({format_number(self.d)})"


@dataclass(frozen=True)
class AutoSize:
    def to_text(self) -> str:
        return "AUTO"


SizeSpec = Union[BoxSize, CylinderSize, SphereSize, AutoSize]


@dataclass(frozen=True)
class FeatureRef:
    """B.f / B[*].f / B[k].f 형태의 타깃 참조 (selector: None | "*" | k)"""

    node: str
    feature: str = "center"
    selector: Union[str, int, None] = None

    def to_text(self) -> str:
        head = self.node
        if self.selector is not None:
            head += f"[{self.selector}]"
        return f"{head}.{self.feature}"


@dataclass(frozen=True)
class AvgTarget:
    refs: tuple[FeatureRef, ...]

    def to_text(self) -> str:
        return "Avg(" + ", ".join(r.to_text() for r in self.refs) + ")"


TargetRef = Union[FeatureRef, AvgTarget]


@dataclass(frozen=True)
class AlignSpec:
    axes: tuple[str, ...]
    this_node: str
    this_feature: str
    target: TargetRef

    def to_text(self) -> str:
        head = "Align" if self.axes == ("X", "Y", "Z") else f"Align({','.join(self.axes)})"
        return f"{head} {self.this_node}.{self.this_feature} to {self.target.to_text()}"


@dataclass(frozen=True)
class OffsetPos:
    dx: float
    dy: float
    dz: float

    def to_text(self) -> str:
        return f"offset({format_vector((self.dx, self.dy, self.dz))})"


@dataclass(frozen=True)
class PolarPos:
    theta_deg: float
    dr: float

    def to_text(self) -> str:
        return f"polar({format_number(self.theta_deg)}; dr={format_number(self.dr)})"


PosSpec = Union[OffsetPos, PolarPos]


@dataclass(frozen=True)
class ConnectSpec:
    a: FeatureRef
    b: FeatureRef

    def to_text(self) -> str:
        return f"{self.a.to_text()} + {self.b.to_text()}"


@dataclass(frozen=True)
class OrientationDirective:
    """orientation= 지시자

    family: axis | radial_from | tangent_to | normal_to | face_align
    """

    family: str
    axis: str | None = None
    target: str | None = None
    face: str | None = None
    target_face: str | None = None

    def to_text(self) -> str:
        if self.family == "axis":
            return f"axis:{self.axis}"
        if self.family in ("radial_from", "tangent_to"):
            return f"axis:{self.family} {self.target}"
        if self.family == "normal_to":
            if self.face == "+Z_face":
                return f"normal:{self.target}"
            return f"{self.face}:normal_to {self.target}"
        return f"{self.face}:align {self.target}.{self.target_face}"


@dataclass(frozen=True)
class RotationSpec:
    """로컬 프레임 기준 자유 회전 (도, XYZ 외부축 순서)"""

    rx: float
    ry: float
    rz: float

    def to_text(self) -> str:
        return f"euler({format_vector((self.rx, self.ry, self.rz))})"


@dataclass(frozen=True)
class GridPattern:
    rows: int
    cols: int
    x_spacing: float = 0.0
    y_spacing: float = 0.0
    start_offset: tuple[float, float] = (0.0, 0.0)

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def to_text(self) -> str:
        x0, y0 = self.start_offset
        return (
            f"grid(rows:{self.rows}, cols:{self.cols}, x_spacing:{format_number(self.x_spacing)}, "
            f"y_spacing:{format_number(self.y_spacing)}, "
            f"start_offset:({format_number(x0)},{format_number(y0)}))"
        )


@dataclass(frozen=True)
class PolarPattern:
    count: int
    radius: float
    start_angle: float = 0.0
    angle_step: float | None = None

    def to_text(self) -> str:
        text = (
            f"polar(count:{self.count}, radius:{format_number(self.radius)}, "
            f"start_angle:{format_number(self.start_angle)}"
        )
        if self.angle_step is not None:
            text += f", angle_step:{format_number(self.angle_step)}"
        return text + ")"


PatternSpec = Union[GridPattern, PolarPattern]
PlacementExpr = Union[
    AlignSpec, tuple, OffsetPos, PolarPos, ConnectSpec, OrientationDirective, RotationSpec,
    GridPattern, PolarPattern,
]


@dataclass(frozen=True)
class NodeRecord:
    id: str
    layer: int = 0
    parent: str | None = None
    node_type: str | None = None
    size: SizeSpec | None = None
    align: tuple[AlignSpec, ...] = ()
    pos: PosSpec | None = None
    connect: ConnectSpec | None = None
    orientation: OrientationDirective | None = None
    rotation: RotationSpec | None = None
    mat: str | None = None
    create_method: str | None = None
    assembly_order: tuple[tuple[str, ...], ...] | None = None
    constraint: str | None = None
    after: tuple[str, ...] = ()
    depends_on: tuple[str, ...] = ()
    tool_id: str | None = None
    target_id: str | None = None
    pattern: PatternSpec | None = None


@dataclass(frozen=True)
class Span:
    line: int
    column: int


@dataclass(frozen=True)
class RecordSpan:
    line: int
    end_line: int
    fields: Mapping[str, Span] = field(default_factory=dict)

    def field(self, key: str) -> Span:
        return self.fields.get(key, Span(self.line, 1))


@dataclass(frozen=True)
class GraphAst:
    materials: tuple[MaterialDef, ...] = ()
    nodes: tuple[NodeRecord, ...] = ()
    source_spans: Mapping[str, RecordSpan] = field(default_factory=dict, compare=False)

    def span(self, node_id: str, key: str | None = None) -> Span | None:
        rec = self.source_spans.get(node_id)
        if rec is None:
            return None
        return rec.field(key) if key else Span(rec.line, 1)


# ============================================================================
# Scalar helpers
# ============================================================================


def _number(text: str) -> float:
    token = text.strip().replace("−", "-")
    if not _NUM_RE.match(token):
        raise DslSyntaxError(f"expected a number, got {text.strip()!r}")
    value = float(token)
    if not math.isfinite(value):
        raise DslSyntaxError(f"number out of range: {token}")
    return value


def _integer(text: str) -> int:
    token = text.strip()
    if not _INT_RE.match(token):
        raise DslSyntaxError(f"expected an integer, got {token!r}")
    return int(token)


def _numbers(text: str, count: int, what: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",")]
    if len(parts) != count:
        raise DslSyntaxError(f"{what} expects {count} values, got {len(parts)}")
    return tuple(_number(p) for p in parts)


def _identifier(text: str, what: str = "id") -> str:
    token = text.strip()
    if not _ID_RE.match(token):
        raise DslSyntaxError(f"invalid {what}: {token!r}")
    return token


def _split_top(text: str, sep: str) -> list[str]:
    """괄호 깊이 0 에서만 분리"""
    parts, depth, buf = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                raise DslSyntaxError("unbalanced brackets")
        if ch == sep and depth == 0:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if depth != 0:
        raise DslSyntaxError("unbalanced brackets")
    parts.append("".join(buf))
    return parts


def _call_args(text: str, name_re: str) -> tuple[str, str] | None:
    m = re.match(rf"^({name_re})\s*\((.*)\)$", text.strip(), re.I | re.S)
    if not m:
        return None
    return m.group(1).lower(), m.group(2)


def _axis_token(text: str) -> str | None:
    m = _AXIS_TOKEN_RE.match(text.strip())
    if not m:
        return None
    return (m.group(1) or "+") + m.group(2).upper()


def _face_token(text: str) -> str:
    token = text.strip()
    if canonical_feature(token) in (None, "center"):
        raise UnknownFeatureName(f"unknown face: {token!r}")
    return token


# ============================================================================
# Placement sub-grammar
# ============================================================================


def parse_feature_ref(text: str, default_feature: str = "center") -> FeatureRef:
    m = _REF_RE.match(text.strip())
    if not m:
        raise DslSyntaxError(f"invalid feature reference: {text.strip()!r}")
    feature = m.group("feat") or default_feature
    if canonical_feature(feature) is None:
        raise UnknownFeatureName(f"unknown feature: {feature!r}")
    sel = m.group("sel")
    selector: Union[str, int, None] = None
    if sel == "*":
        selector = "*"
    elif sel is not None:
        selector = int(sel)
    return FeatureRef(node=m.group("node"), feature=feature, selector=selector)


def _parse_target(text: str) -> TargetRef:
    call = _call_args(text, "avg")
    if call:
        refs = [r for r in _split_top(call[1], ",")]
        if not any(r.strip() for r in refs):
            raise DslSyntaxError("Avg() needs at least one reference")
        return AvgTarget(tuple(parse_feature_ref(r) for r in refs))
    return parse_feature_ref(text)


def parse_align(text: str) -> AlignSpec:
    m = _ALIGN_RE.match(text.strip())
    if not m:
        raise DslSyntaxError(f"expected 'Align(<axes>) <this>.<feature> to <target>': {text.strip()!r}")
    axes_text = (m.group("axes") or "").replace(",", "").replace(" ", "").upper()
    axes = []
    for ch in axes_text:
        if ch not in "XYZ":
            raise DslSyntaxError(f"unknown axis {ch!r} in Align")
        if ch not in axes:
            axes.append(ch)
    axes_tuple = tuple(a for a in "XYZ" if a in axes) or ("X", "Y", "Z")

    this = m.group("this")
    node, _, feature = this.partition(".")
    node = _identifier(node, "align subject")
    feature = feature or "center"
    if canonical_feature(feature) is None:
        raise UnknownFeatureName(f"unknown feature: {feature!r}")
    return AlignSpec(axes_tuple, node, feature, _parse_target(m.group("target")))


def parse_aligns(text: str) -> tuple[AlignSpec, ...]:
    return tuple(parse_align(part) for part in text.split(";") if part.strip())


def parse_pos(text: str) -> PosSpec:
    token = text.strip()
    call = _call_args(token, "offset")
    if call is None and token.startswith("("):
        if not token.endswith(")"):
            raise DslSyntaxError("unterminated tuple")
        call = ("offset", token[1:-1])
    if call:
        return OffsetPos(*_numbers(call[1], 3, "offset"))
    call = _call_args(token, "polar")
    if call:
        parts = re.split(r"[;,]", call[1])
        if len(parts) != 2:
            raise DslSyntaxError("polar expects (theta; dr=delta)")
        theta = _number(parts[0])
        dr_text = parts[1].strip()
        if dr_text.lower().startswith("dr"):
            dr_text = dr_text[2:].lstrip()
            if not dr_text.startswith("="):
                raise DslSyntaxError("polar expects dr=<value>")
            dr_text = dr_text[1:]
        return PolarPos(theta, _number(dr_text))
    m = re.match(r"^([A-Za-z_]\w*)\s*\(", token)
    if m:
        raise UnknownDirective(f"unsupported placement: {m.group(1)}")
    raise DslSyntaxError(f"invalid pos: {token!r}")


def parse_connect(text: str) -> ConnectSpec:
    token = text.strip()
    for i, ch in enumerate(token):
        if ch != "+":
            continue
        left, right = token[:i].strip(), token[i + 1:].strip()
        if left and right and not left.endswith("."):
            return ConnectSpec(parse_feature_ref(left), parse_feature_ref(right))
    raise DslSyntaxError(f"expected '<A>.<feature> + <B>.<feature>': {token!r}")


def parse_orientation(text: str) -> OrientationDirective:
    token = text.strip()
    m = re.match(r"^axis\s*:\s*(.+)$", token, re.I)
    if m:
        rest = m.group(1).strip()
        m2 = re.match(rf"^(radial_from|tangent_to)\s+({ID_PATTERN})$", rest, re.I)
        if m2:
            return OrientationDirective(m2.group(1).lower(), target=m2.group(2))
        axis = _axis_token(rest)
        if axis:
            return OrientationDirective("axis", axis=axis)
        raise UnknownDirective(f"unknown axis directive: {rest!r}")
    m = re.match(rf"^(?:normal\s*:|normal_to\s+)\s*({ID_PATTERN})$", token, re.I)
    if m:
        return OrientationDirective("normal_to", target=m.group(1), face="+Z_face")
    m = re.match(rf"^([+-]?[A-Za-z_]+)\s*:\s*normal_to\s+({ID_PATTERN})$", token, re.I)
    if m:
        return OrientationDirective("normal_to", target=m.group(2), face=_face_token(m.group(1)))
    m = re.match(rf"^([+-]?[A-Za-z_]+)\s*:\s*align\s+({ID_PATTERN})\.([+-]?[A-Za-z_]+)$", token, re.I)
    if m:
        return OrientationDirective(
            "face_align",
            target=m.group(2),
            face=_face_token(m.group(1)),
            target_face=_face_token(m.group(3)),
        )
    axis = _axis_token(token)
    if axis:
        return OrientationDirective("axis", axis=axis)
    raise UnknownDirective(f"unknown orientation directive: {token!r}")


def parse_rotation(text: str) -> RotationSpec:
    token = text.strip()
    call = _call_args(token, "euler")
    if call is None and token.startswith("(") and token.endswith(")"):
        call = ("euler", token[1:-1])
    if call:
        return RotationSpec(*_numbers(call[1], 3, "euler"))
    m = re.match(r"^(spin|tilt)\s*:\s*(.+)$", token, re.I)
    if m:
        angle = _number(m.group(2))
        if m.group(1).lower() == "spin":
            return RotationSpec(0.0, 0.0, angle)
        return RotationSpec(angle, 0.0, 0.0)
    raise UnknownDirective(f"unknown rotation: {token!r}")


def _pattern_params(body: str, allowed: tuple[str, ...]) -> dict[str, str]:
    params: dict[str, str] = {}
    for item in _split_top(body, ","):
        if not item.strip():
            continue
        key, sep, value = item.partition(":")
        key = key.strip().lower()
        if not sep:
            raise DslSyntaxError(f"pattern parameter needs 'name:value': {item.strip()!r}")
        if key not in allowed:
            raise DslSyntaxError(f"unknown pattern parameter: {key!r}")
        if key in params:
            raise DslSyntaxError(f"duplicate pattern parameter: {key!r}")
        params[key] = value
    return params


def parse_pattern(text: str) -> PatternSpec:
    call = _call_args(text, "grid|polar")
    if not call:
        raise UnknownDirective(f"unknown pattern: {text.strip()!r}")
    kind, body = call
    if kind == "grid":
        p = _pattern_params(body, ("rows", "cols", "x_spacing", "y_spacing", "start_offset"))
        if "rows" not in p or "cols" not in p:
            raise DslSyntaxError("grid pattern needs rows and cols")
        start = (0.0, 0.0)
        if "start_offset" in p:
            raw = p["start_offset"].strip()
            if not (raw.startswith("(") and raw.endswith(")")):
                raise DslSyntaxError("start_offset expects (x0,y0)")
            start = _numbers(raw[1:-1], 2, "start_offset")
        return GridPattern(
            rows=_integer(p["rows"]),
            cols=_integer(p["cols"]),
            x_spacing=_number(p.get("x_spacing", "0")),
            y_spacing=_number(p.get("y_spacing", "0")),
            start_offset=start,
        )
    p = _pattern_params(body, ("count", "radius", "start_angle", "angle_step"))
    if "count" not in p or "radius" not in p:
        raise DslSyntaxError("polar pattern needs count and radius")
    count = _integer(p["count"])
    step = _number(p["angle_step"]) if "angle_step" in p else None
    if step is None and count > 0:
        step = 360.0 / count
    return PolarPattern(
        count=count,
        radius=_number(p["radius"]),
        start_angle=_number(p.get("start_angle", "0")),
        angle_step=step,
    )


def parse_size(text: str) -> SizeSpec:
    token = text.strip()
    if token.upper() == "AUTO":
        return AutoSize()
    call = _call_args(token, "[A-Za-z_]+")
    if call:
        kind, body = call
        if kind in ("box", "cube"):
            return BoxSize(*_numbers(body, 3, kind))
        if kind in ("cylinder", "cone", "disc"):
            d, h = _numbers(body, 2, kind)
            return CylinderSize(d, h, kind)
        if kind in ("sphere", "hemisphere"):
            (d,) = _numbers(body, 1, kind)
            return SphereSize(d, kind)
        raise DslSyntaxError(f"unknown size kind: {kind!r}")
    m = re.match(r"^(.*?)\s*m$", token)
    if m:
        token = m.group(1)
    parts = re.split(r"\s*[×xX]\s*", token)
    if len(parts) == 3:
        return BoxSize(*(_number(p) for p in parts))
    raise DslSyntaxError(f"invalid size: {text.strip()!r}")


def parse_groups(text: str) -> tuple[tuple[str, ...], ...]:
    token = text.strip()
    if token.startswith("[[") and token.endswith("]]"):
        token = token[1:-1].strip()
    if not re.fullmatch(r"\[[^\[\]]*\](?:\s*,\s*\[[^\[\]]*\])*", token):
        raise DslSyntaxError(f"invalid assembly_order: {text.strip()!r}")
    groups = []
    for inner in re.findall(r"\[([^\[\]]*)\]", token):
        ids = tuple(_identifier(x, "assembly_order entry") for x in inner.split(","))
        groups.append(ids)
    return tuple(groups)


def parse_id_list(text: str) -> tuple[str, ...]:
    token = text.strip()
    if token.startswith("[") and token.endswith("]"):
        token = token[1:-1]
    if not token.strip():
        return ()
    return tuple(_identifier(x) for x in token.split(","))


def _parse_field(key: str, value: str):
    if key in ("id",):
        return _identifier(value)
    if key in ("parent", "mat", "tool_id", "target_id"):
        return _identifier(value, key)
    if key in ("type", "constraint"):
        return value
    if key == "size":
        return parse_size(value)
    if key == "align":
        return parse_aligns(value)
    if key == "pos":
        return parse_pos(value)
    if key == "connect":
        return parse_connect(value)
    if key == "orientation":
        return parse_orientation(value)
    if key == "rotation":
        return parse_rotation(value)
    if key == "create_method":
        method = value.strip().lower()
        if method not in CREATE_METHODS:
            raise DslSyntaxError(f"unknown create_method: {value.strip()!r}")
        return method
    if key == "assembly_order":
        return parse_groups(value)
    if key in ("after", "depends_on"):
        return parse_id_list(value)
    if key == "pattern":
        return parse_pattern(value)
    raise UnknownKey(f"unknown key: {key!r}")


def parse_placement(expr_text: str) -> PlacementExpr:
    """배치 표현식 하나를 파싱 (align/pos/connect/orientation/rotation/pattern)"""
    try:
        token = expr_text.strip()
        m = re.match(r"^(align|pos|connect|orientation|rotation|pattern)\s*=\s*(.*)$", token, re.I | re.S)
        if m:
            key, value = m.group(1).lower(), m.group(2)
        else:
            key, value = _infer_placement_kind(token), token
        result = _parse_field(key, value)
        if key == "align" and len(result) == 1:
            return result[0]
        return result
    except GraphCadError as exc:
        raise exc.at(1, 1)


def _infer_placement_kind(token: str) -> str:
    low = token.lower()
    if low.startswith("align"):
        return "align"
    if low.startswith("grid") or (low.startswith("polar") and "count" in low):
        return "pattern"
    if low.startswith(("offset", "polar", "(")):
        return "pos"
    if low.startswith(("euler", "spin", "tilt")):
        return "rotation"
    if low.startswith(("axis", "normal")) or re.match(r"^[+-]?[a-z_]+\s*:", low) or _axis_token(token):
        return "orientation"
    if "+" in token and "." in token:
        return "connect"
    raise UnknownDirective(f"unrecognised placement expression: {token!r}")


# ============================================================================
# Block scanning
# ============================================================================


def parse_materials(text: str, first_line: int = 1) -> list[MaterialDef]:
    """MATERIAL LIBRARY 헤더와 #END_MATERIALS 사이 영역 파싱"""
    materials: list[MaterialDef] = []
    seen: set[str] = set()
    for offset, raw in enumerate(text.splitlines()):
        line_no = first_line + offset
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        column = raw.index(stripped[0]) + 1
        name, sep, rest = stripped.partition("|")
        name = name.strip()
        if not sep or not _ID_RE.match(name):
            raise DslSyntaxError(f"expected 'name | diffuse_color=(R,G,B,A)': {stripped!r}", line_no, column)
        m = re.match(r"^diffuse_color\s*=\s*\((.*)\)$", rest.strip())
        if not m:
            raise DslSyntaxError(f"expected diffuse_color=(R,G,B,A) for {name}", line_no, column)
        channels = m.group(1).split(",")
        if len(channels) != 4:
            raise MalformedRgba(f"{name}: expected 4 channels, got {len(channels)}", line_no, column)
        try:
            rgba = tuple(_number(c) for c in channels)
        except DslSyntaxError as exc:
            raise MalformedRgba(f"{name}: {exc.message}", line_no, column) from None
        if any(c < 0 or c > 1 for c in rgba):
            raise MalformedRgba(f"{name}: channels must lie in [0,1]", line_no, column)
        if name in seen:
            raise DuplicateMaterialName(f"duplicate material: {name}", line_no, column)
        seen.add(name)
        materials.append(MaterialDef(name, rgba))  # type: ignore[arg-type]
    return materials


class _RecordText:
    """여러 줄에 걸친 레코드 텍스트와 원본 위치 매핑"""

    def __init__(self, layer: int, line: int, column: int, text: str):
        self.layer = layer
        self.line = line
        self.end_line = line
        self.text = text
        self.parts = [(0, line, column)]

    def extend(self, line: int, column: int, text: str) -> None:
        self.text += " "
        self.parts.append((len(self.text), line, column))
        self.text += text
        self.end_line = line

    def locate(self, offset: int) -> Span:
        start, line, column = self.parts[0]
        for part in self.parts:
            if part[0] <= offset:
                start, line, column = part
        return Span(line, column + max(0, offset - start))


def _parse_record(rec: _RecordText) -> tuple[NodeRecord, RecordSpan]:
    values: dict[str, object] = {}
    spans: dict[str, Span] = {}
    offset = 0
    for piece in rec.text.split("|"):
        piece_offset = offset
        offset += len(piece) + 1
        if not piece.strip():
            continue
        lead = len(piece) - len(piece.lstrip())
        key_span = rec.locate(piece_offset + lead)
        key, sep, value = piece.strip().partition("=")
        key = key.strip().lower()
        if not sep:
            raise DslSyntaxError(f"expected key=value: {piece.strip()!r}", key_span.line, key_span.column)
        if key not in RECORD_KEYS:
            raise UnknownKey(f"unknown key: {key!r}", key_span.line, key_span.column)
        if key in values:
            raise DuplicateKey(f"duplicate key: {key!r}", key_span.line, key_span.column)
        spans[key] = key_span
        value = value.strip()
        if value == "-":
            values[key] = None
            continue
        try:
            values[key] = _parse_field(key, value)
        except GraphCadError as exc:
            raise exc.at(key_span.line, key_span.column)
        except (ValueError, TypeError, IndexError) as exc:
            raise DslSyntaxError(str(exc), key_span.line, key_span.column) from None
    if values.get("id") is None:
        raise MissingIdField("record has no id", rec.line, 1)

    kwargs = {}
    for key, value in values.items():
        if value is None:
            continue
        kwargs["node_type" if key == "type" else key] = value
    node = NodeRecord(layer=rec.layer, **kwargs)  # type: ignore[arg-type]
    return node, RecordSpan(rec.line, rec.end_line, spans)


def _parse_graph_lines(lines: list[tuple[int, str]]) -> tuple[list[NodeRecord], dict[str, RecordSpan]]:
    records: list[_RecordText] = []
    for line_no, raw in lines:
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        column = raw.index(stripped[0]) + 1
        m = _RECORD_RE.match(stripped)
        if m:
            body = m.group(2)
            body_col = column + (len(stripped) - len(body))
            records.append(_RecordText(int(m.group(1)), line_no, body_col, body))
            continue
        if not records:
            raise DslSyntaxError(f"expected a record starting with 'Lk:': {stripped!r}", line_no, column)
        records[-1].extend(line_no, column, stripped)

    nodes: list[NodeRecord] = []
    spans: dict[str, RecordSpan] = {}
    for rec in records:
        node, span = _parse_record(rec)
        if node.id in spans:
            raise DuplicateNodeId(f"duplicate node id: {node.id}", rec.line, span.field("id").column)
        nodes.append(node)
        spans[node.id] = span
    return nodes, spans


def parse_graph(text: str) -> GraphAst:
    """MATERIAL LIBRARY + BEGIN_GRAPH 블록 전체를 GraphAst 로 파싱"""
    state = "outside"
    material_start = graph_start = 0
    material_lines: list[str] = []
    graph_lines: list[tuple[int, str]] = []
    materials: list[MaterialDef] = []
    seen_graph = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if state == "materials":
            if stripped == MATERIAL_END:
                materials.extend(parse_materials("\n".join(material_lines), material_start + 1))
                state = "outside"
            else:
                material_lines.append(raw)
            continue
        if state == "graph":
            if _GRAPH_END_RE.match(stripped):
                state = "outside"
            else:
                graph_lines.append((line_no, raw))
            continue
        if not stripped:
            continue
        if _MATERIAL_HEADER_RE.match(stripped) and not materials and not seen_graph:
            state, material_start = "materials", line_no
        elif _GRAPH_BEGIN_RE.match(stripped) and not seen_graph:
            state, graph_start, seen_graph = "graph", line_no, True
        elif stripped.startswith("#") and not _GRAPH_BEGIN_RE.match(stripped):
            continue
        else:
            column = raw.index(stripped[0]) + 1
            raise DslSyntaxError(f"unexpected text outside blocks: {stripped[:40]!r}", line_no, column)

    if state == "materials":
        raise UnterminatedBlock("material block has no #END_MATERIALS", material_start, 1)
    if state == "graph":
        raise UnterminatedBlock("graph block has no END_GRAPH marker", graph_start, 1)
    if not seen_graph:
        raise DslSyntaxError("missing BEGIN_GRAPH block", 1, 1)

    nodes, spans = _parse_graph_lines(graph_lines)
    logger.debug("parsed %d material(s), %d node(s)", len(materials), len(nodes))
    return GraphAst(tuple(materials), tuple(nodes), spans)


# ============================================================================
# Serialization
# ============================================================================


def _value_text(node: NodeRecord, key: str) -> str | None:
    value = getattr(node, "node_type" if key == "type" else key)
    if value is None or value == ():
        return None
    if key == "align":
        return "; ".join(a.to_text() for a in value)
    if key == "assembly_order":
        return "[" + ", ".join("[" + ", ".join(g) + "]" for g in value) + "]"
    if key in ("after", "depends_on"):
        return "[" + ", ".join(value) + "]"
    if hasattr(value, "to_text"):
        return value.to_text()
    return str(value)


_LAYOUT = (
    ("size",),
    ("align", "pos", "connect"),
    ("orientation",),
    ("rotation",),
    ("mat", "create_method"),
    ("assembly_order", "constraint"),
    ("after", "depends_on"),
    ("tool_id", "target_id"),
    ("pattern",),
)
_OPTIONAL_KEYS = ("rotation", "pattern")


def _record_lines(node: NodeRecord) -> list[str]:
    def kv(key: str) -> str:
        text = _value_text(node, key)
        return f"{key}={'-' if text is None else text}"

    lines = [f"L{node.layer}: " + " | ".join(kv(k) for k in ("id", "parent", "type"))]
    for keys in _LAYOUT:
        if keys[0] in _OPTIONAL_KEYS and _value_text(node, keys[0]) is None:
            continue
        lines.append("    | " + " | ".join(kv(k) for k in keys))
    return lines


def serialize_graph(ast: GraphAst) -> str:
    """GraphAst 를 정규 텍스트로 직렬화"""
    out: list[str] = []
    if ast.materials:
        out.append(MATERIAL_HEADER)
        for mat in ast.materials:
            rgba = ",".join(format_number(c) for c in mat.rgba)
            out.append(f"{mat.name} | diffuse_color=({rgba})")
        out.append(MATERIAL_END)
    out.append(GRAPH_BEGIN)
    for i, node in enumerate(ast.nodes):
        if i:
            out.append("")
        out.extend(_record_lines(node))
    out.append(GRAPH_END)
    return "\n".join(out) + "\n"
