#!/usr/bin/env python3
"""ActionPlan 텍스트 렌더러

emit_actions() : 사람이 읽는 3-블록 액션 스크립트
emit_script()  : Blender(bpy) 스크립트 텍스트 (실행하지 않음)

출력은 결정적이며 숫자는 최단 왕복 표기(format_number)를 쓴다.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Iterable, Sequence

from graph_dsl import format_number, format_vector
from graph_errors import UnsupportedDialect, UnsupportedVerb
from planner import ActionPlan, Section, Step, Verb

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"
SUPPORTED_DIALECTS = ("bpy",)

_KIND_WORDS = {
    "cube": "cuboid",
    "cylinder": "cylinder",
    "cone": "cone",
    "disc": "disc",
    "sphere": "sphere",
    "hemisphere": "hemisphere",
}
_ADD_FUNCS = {
    "cube": "add_cube",
    "cylinder": "add_cylinder",
    "cone": "add_cone",
    "disc": "add_disc",
    "sphere": "add_sphere",
    "hemisphere": "add_hemisphere",
    "empty": "add_empty",
}
_RUN_STARTS = (Verb.CREATE, Verb.REPEAT, Verb.VALIDATE)
_INDEXED_RE = re.compile(r"^(.+)\[(\d+|k)\](.*)$")


def _verb(step: Step) -> Verb:
    try:
        return Verb(step.verb)
    except ValueError:
        raise UnsupportedVerb(f"unsupported verb: {step.verb!r}") from None


def _runs(steps: Sequence[Step]) -> list[list[Step]]:
    """객체 단위 스텝 묶음 (Create / Repeat / Validate 에서 새 묶음 시작)"""
    runs: list[list[Step]] = []
    for step in steps:
        if not runs or _verb(step) in _RUN_STARTS:
            runs.append([step])
        else:
            runs[-1].append(step)
    return runs


def _tuple(values: Iterable[float]) -> str:
    values = list(values)
    if len(values) == 1:
        return f"({format_number(values[0])},)"
    return f"({format_vector(values)})"


def _feature_text(feature: str) -> str:
    return feature if feature == "center" else f"{feature}_face"


def _points_text(points) -> str:
    refs = [f"{name}.{_feature_text(feature)}" for name, feature in points]
    return refs[0] if len(refs) == 1 else "Avg(" + ", ".join(refs) + ")"


# ============================================================================
# Action text
# ============================================================================


def _sentence(step: Step) -> list[str]:
    verb = _verb(step)
    t = step.target
    a = step.args
    if verb is Verb.RESET_SCENE:
        return ["Delete every existing object to start from a clean scene."]
    if verb is Verb.SET_UNITS:
        return [f"Set the length unit to **{a.get('unit', 'metres')}**."]
    if verb is Verb.DEFINE_MATERIAL:
        return [f"Define material {t}; diffuse_color = ({format_vector(a['rgba'])})."]
    if verb is Verb.CREATE:
        size = "×".join(format_number(d) for d in a["dims"])
        if a["kind"] == "empty":
            return [f"Create empty anchor with size {size} m and name it {t}."]
        return [f"Create primitive {_KIND_WORDS[a['kind']]} with size {size} m and name it {t}."]
    if verb is Verb.ROTATE:
        family = a.get("family", "axis")
        if family == "euler":
            return [f"Rotate {t} by euler({format_vector(a['euler'])}) degrees in its local frame."]
        if family == "axis":
            return [f"Rotate {t} so its axis aligns {a.get('axis', '+Z')} (world)."]
        if family == "radial_from":
            return [f"Rotate {t} so its axis points radially away from {a['reference']}."]
        if family == "tangent_to":
            return [f"Rotate {t} so its axis runs tangent around {a['reference']}."]
        if family == "normal_to":
            return [f"Rotate {t} so its {a['face']} is normal to {a['reference']}."]
        return [f"Rotate {t} so its {a['face']} aligns with {a['reference']}.{a['target_face']}."]
    if verb is Verb.ALIGN:
        return [f"{a['text']}."]
    if verb is Verb.ANCHOR:
        return [f"Anchor {t} to {a.get('reference', 'world.origin')}."]
    if verb is Verb.OFFSET:
        if "grid_step" in a:
            x0, y0, z0 = (format_number(v) for v in a["vector"])
            dx, dy = (format_number(v) for v in a["grid_step"])
            return [
                f"Then move by offset({x0} + {dx}*c, {y0} + {dy}*r, {z0}) "
                f"with r, c = divmod(k, {a['cols']})."
            ]
        return [f"Then move by offset({format_vector(a['vector'])})."]
    if verb is Verb.POLAR:
        theta = format_number(a["theta"])
        if "theta_step" in a:
            theta = f"{theta} + {format_number(a['theta_step'])}*k"
        return [f"Then move by polar({theta}; dr={format_number(a['dr'])})."]
    if verb is Verb.CONNECT:
        return [f"Connect {t} between {a['text']}."]
    if verb is Verb.BOOLEAN_SUBTRACT:
        return [f"Boolean-subtract {a['tool']} from {a['target']}."]
    if verb is Verb.BOOLEAN_UNION:
        return [f"Boolean-union {a['tool']} into {a['target']}."]
    if verb is Verb.BEVEL:
        return [f"Bevel {t} with radius {format_number(a['radius'])} and {a['segments']} segments."]
    if verb is Verb.SNAP:
        return [f"Snap {t}.{_feature_text(a.get('this', 'center'))} to {_points_text(a['points'])}."]
    if verb is Verb.VALIDATE:
        return [f'Validate "{a["text"]}".', "Assembly guideline satisfied."]
    if verb is Verb.ASSIGN_MATERIAL:
        return [f"Assign material {a['material']} to {t}."]
    # Repeat
    last = a["count"] - 1
    lines = [f"Repeat for k = 0..{last} as {a.get('pattern') or a.get('kind', 'pattern')}:"]
    for inner in step.body:
        lines.extend("  " + s for s in _sentence(inner))
    lines.append("End repeat.")
    return lines


def _section_actions(section: Section) -> list[str]:
    lines = [f"---  SECTION {section.number} – {section.heading}  ---"]
    for i, run in enumerate(_runs(section.steps)):
        if i:
            lines.append("")
        for step in run:
            lines.extend(_sentence(step))
    lines.append(section.closing)
    return lines


def emit_actions(plan: ActionPlan) -> str:
    """ActionPlan -> BLOCK 0/1/2 액션 텍스트"""
    lines = ["BLOCK 0 – Scene Reset & Units", ""]
    for step in plan.block0:
        lines.extend(_sentence(step))
    lines += ["", "---", ""]
    if plan.block1:
        lines += ["BLOCK 1 – Materials", ""]
        for step in plan.block1:
            lines.extend(_sentence(step))
        lines += ["", "---", ""]
    if plan.block2:
        lines += ["BLOCK 2 – Stage-by-Stage Operations", ""]
        for section in plan.block2:
            lines.extend(_section_actions(section))
            lines.append("")
    lines.append("All stages complete.")
    return "\n".join(lines) + "\n"


# ============================================================================
# bpy script
# ============================================================================

_SCRIPT_HEADER = (
    "import bpy",
    "import math",
    "from mathutils import Vector, Matrix, Euler",
    "import mathutils as mu",
)


def _banner(title: str) -> list[str]:
    return ["", "# ", f"# {title}", "# ", ""]


def _identifier(name: str) -> str:
    return re.sub(r"\W", "_", name)


def _var(name: str) -> str:
    """객체 이름 -> 스크립트 변수 ('bolt[2]' -> bolt_items[2])"""
    match = _INDEXED_RE.match(name)
    if match is None:
        return _identifier(name)
    return f"{_identifier(match.group(1) + match.group(3))}_items[{match.group(2)}]"


def _name_literal(name: str) -> str:
    if "[k]" in name:
        return 'f"' + name.replace("[k]", "[{k}]") + '"'
    return f'"{name}"'


def _point_expr(points) -> str:
    exprs = [f'Locator({_var(name)}).face_center_world("{feature}")' for name, feature in points]
    if len(exprs) == 1:
        return exprs[0]
    return "mean_point([" + ", ".join(exprs) + "])"


def _local_axis_literal(local) -> str:
    return f"'{local}'" if isinstance(local, str) else _tuple(local)


class _ScriptWriter:
    def __init__(self, plan: ActionPlan):
        self.plan = plan
        self.lines: list[str] = []
        self.item_lists: set[str] = set()

    def _ensure_items(self, name: str, indent: str) -> None:
        match = _INDEXED_RE.match(name)
        if match is None:
            return
        base = _identifier(match.group(1) + match.group(3))
        if base not in self.item_lists:
            self.item_lists.add(base)
            self.lines.append(f"{indent}{base}_items = {{}}")

    def _moved(self, step: Step, vector_expr: str, anchored: bool) -> str:
        a = step.args
        obj = _var(step.target or "")
        if a.get("reference") and not a.get("axis_aligned", True):
            vector_expr = f"{_var(a['reference'])}.matrix_world.to_3x3() @ {vector_expr}"
        op = "=" if anchored else "+="
        return f"{obj}.location {op} {vector_expr}"

    def step(self, step: Step, indent: str = "", anchored: bool = False) -> None:
        verb = _verb(step)
        a = step.args
        obj = _var(step.target or "")
        out = self.lines
        if verb is Verb.CREATE:
            self._ensure_items(step.target or "", indent)
            func = _ADD_FUNCS[a["kind"]]
            out.append(f"{indent}{obj} = {func}({_name_literal(step.target or '')}, {_tuple(a['dims'])})")
        elif verb is Verb.ROTATE:
            if a.get("family") == "euler":
                out.append(f"{indent}rotate_local({obj}, {_tuple(a['euler'])})")
            else:
                vector = _tuple(a["vector"]) if "vector" in a else f"{obj.split('_items')[0]}_dirs[k]"
                out.append(f"{indent}align_axis_to_vector({obj}, {_local_axis_literal(a['local_axis'])}, {vector})")
        elif verb is Verb.ALIGN:
            out.append(f"{indent}ref = {_point_expr(a['points'])}")
            out.append(f'{indent}offs = Locator({obj}).face_center_world("{a["this"]}")')
            if a["axes"] == "XYZ":
                out.append(f"{indent}delta = ref - offs")
            else:
                out.append(f'{indent}delta = mask_axes(ref - offs, "{a["axes"]}")')
            out.append(f"{indent}{obj}.location += delta")
        elif verb is Verb.ANCHOR:
            if not anchored:
                out.append(f"{indent}{obj}.location = Vector((0, 0, 0))")
        elif verb is Verb.OFFSET:
            if "grid_step" in a:
                x0, y0, z0 = (format_number(v) for v in a["vector"])
                dx, dy = (format_number(v) for v in a["grid_step"])
                out.append(f"{indent}r, c = divmod(k, {a['cols']})")
                expr = f"Vector(({x0} + {dx} * c, {y0} + {dy} * r, {z0}))"
            else:
                expr = f"Vector({_tuple(a['vector'])})"
            out.append(indent + self._moved(step, expr, anchored))
        elif verb is Verb.POLAR:
            theta = format_number(a["theta"])
            if "theta_step" in a:
                theta = f"{theta} + {format_number(a['theta_step'])} * k"
            expr = f"polar_offset({theta}, {format_number(a['dr'])})"
            out.append(indent + self._moved(step, expr, anchored))
        elif verb is Verb.CONNECT:
            out.append(f"{indent}connect_points({obj}, {_point_expr(a['a'])}, {_point_expr(a['b'])})")
        elif verb is Verb.BOOLEAN_SUBTRACT:
            out.append(f"{indent}boolean_subtract({_var(a['target'])}, {_var(a['tool'])})")
        elif verb is Verb.BOOLEAN_UNION:
            out.append(f"{indent}boolean_union({_var(a['target'])}, {_var(a['tool'])})")
        elif verb is Verb.BEVEL:
            out.append(f"{indent}add_bevel({obj}, {format_number(a['radius'])}, {a['segments']})")
        elif verb is Verb.SNAP:
            out.append(f"{indent}target = {_point_expr(a['points'])}")
            out.append(f'{indent}{obj}.location += target - Locator({obj}).face_center_world("{a.get("this", "center")}")')
        elif verb is Verb.VALIDATE:
            out.append(f'{indent}# Validate "{a["text"]}"')
        elif verb is Verb.ASSIGN_MATERIAL:
            out.append(f"{indent}{obj}.data.materials.append(mat_{_identifier(a['material'])})")
        elif verb is Verb.REPEAT:
            self.repeat(step, indent)
        else:
            raise UnsupportedVerb(f"{verb.value} is not valid inside a section")

    def steps(self, steps: Sequence[Step], indent: str = "") -> None:
        for i, step in enumerate(steps):
            anchored = False
            if i and _verb(steps[i - 1]) is Verb.ANCHOR and steps[i - 1].target == step.target:
                anchored = True
            if _verb(step) is Verb.ANCHOR and i + 1 < len(steps):
                nxt = steps[i + 1]
                anchored = _verb(nxt) in (Verb.OFFSET, Verb.POLAR) and nxt.target == step.target
            self.step(step, indent, anchored)

    def repeat(self, step: Step, indent: str) -> None:
        for inner in step.body:
            if _verb(inner) is Verb.CREATE:
                self._ensure_items(inner.target or "", indent)
            if _verb(inner) is Verb.ROTATE and "vectors" in inner.args:
                base = _var(inner.target or "").split("_items")[0]
                dirs = ", ".join(_tuple(v) for v in inner.args["vectors"])
                self.lines.append(f"{indent}{base}_dirs = [{dirs}]")
        self.lines.append(f"{indent}for k in range({step.args['count']}):")
        self.steps(step.body, indent + "    ")


def _helpers_text() -> list[str]:
    return (TEMPLATE_DIR / "bpy_helpers.txt").read_text(encoding="utf-8").rstrip("\n").split("\n")


def emit_script(plan: ActionPlan, dialect: str = "bpy") -> str:
    """ActionPlan -> bpy 스크립트 텍스트"""
    if dialect not in SUPPORTED_DIALECTS:
        raise UnsupportedDialect(f"unsupported dialect {dialect!r} (supported: {', '.join(SUPPORTED_DIALECTS)})")

    writer = _ScriptWriter(plan)
    lines = writer.lines
    lines.extend(_SCRIPT_HEADER)
    lines.extend(_banner("Helper Functions"))
    lines.extend(_helpers_text())

    lines.extend(_banner("Scene Reset & Units"))
    for step in plan.block0:
        verb = _verb(step)
        if verb is Verb.RESET_SCENE:
            lines += ["bpy.ops.object.select_all(action='SELECT')", "bpy.ops.object.delete()"]
        elif verb is Verb.SET_UNITS:
            lines += [
                "bpy.context.scene.unit_settings.system = 'METRIC'",
                "bpy.context.scene.unit_settings.scale_length = 1",
            ]
        else:
            raise UnsupportedVerb(f"{verb.value} is not valid in block 0")

    if plan.block1:
        lines.extend(_banner("Materials"))
        for step in plan.block1:
            if _verb(step) is not Verb.DEFINE_MATERIAL:
                raise UnsupportedVerb(f"{step.verb} is not valid in block 1")
            name = step.target or ""
            lines.append(f'mat_{_identifier(name)} = make_material("{name}", {_tuple(step.args["rgba"])})')

    for section in plan.block2:
        lines.extend(_banner(f"SECTION {section.number} – {section.heading}"))
        runs = _runs(section.steps)
        for i, run in enumerate(runs):
            if i:
                lines.append("")
            if len(runs) > 1:
                lines.append(f"# {run[0].target}")
            writer.steps(run)

    logger.debug("emitted %d script line(s)", len(lines))
    return "\n".join(lines) + "\n"
