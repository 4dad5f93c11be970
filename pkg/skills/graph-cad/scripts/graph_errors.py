"""graph-cad 도메인 에러 정의

모든 에러는 GraphCadError 를 상속하며 code/message/line/column 을 가진다.
CLI 는 to_dict() 결과를 진단 리포트(JSON)로 그대로 출력한다.
"""
from __future__ import annotations

from typing import Any, Iterable


class GraphCadError(Exception):
    """graph-cad 공통 에러"""

    code = "GraphCadError"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def at(self, line: int, column: int) -> "GraphCadError":
        """위치 정보가 없으면 채워서 돌려준다"""
        if self.line is None:
            self.line = line
            self.column = column
        return self

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "message": self.message,
            "line": self.line,
            "column": self.column,
        }

    def __str__(self) -> str:
        if self.line is not None:
            return f"{self.code} at {self.line}:{self.column or 1}: {self.message}"
        return f"{self.code}: {self.message}"


# --- graph-dsl ---

class MalformedRgba(GraphCadError):
    code = "MalformedRgba"


class DuplicateMaterialName(GraphCadError):
    code = "DuplicateMaterialName"


class UnknownKey(GraphCadError):
    code = "UnknownKey"


class DuplicateKey(GraphCadError):
    code = "DuplicateKey"


class DuplicateNodeId(GraphCadError):
    code = "DuplicateNodeId"


class MissingIdField(GraphCadError):
    code = "MissingIdField"


class UnterminatedBlock(GraphCadError):
    code = "UnterminatedBlock"


class DslSyntaxError(GraphCadError):
    code = "SyntaxError"


class UnknownFeatureName(GraphCadError):
    code = "UnknownFeatureName"


class UnknownDirective(GraphCadError):
    code = "UnknownDirective"


# --- graph-core ---

class CycleDetected(GraphCadError):
    code = "CycleDetected"

    def __init__(self, path: list[str], line: int | None = None, column: int | None = None):
        super().__init__("cycle: " + " -> ".join(path), line, column)
        self.path = list(path)


class DanglingReference(GraphCadError):
    code = "DanglingReference"


class AssemblyOrderGap(GraphCadError):
    code = "AssemblyOrderGap"


class BooleanMissingOperands(GraphCadError):
    code = "BooleanMissingOperands"


class AutoSizeOnPrimitive(GraphCadError):
    code = "AutoSizeOnPrimitive"


class AfterCrossesGroup(GraphCadError):
    code = "AfterCrossesGroup"


class InvalidPattern(GraphCadError):
    code = "InvalidPattern"


class NonPositiveCount(GraphCadError):
    code = "NonPositiveCount"


class ZeroSpacingWithMultipleCells(GraphCadError):
    code = "ZeroSpacingWithMultipleCells"


class ValidationFailed(GraphCadError):
    """validate() 가 모은 진단 목록"""

    code = "ValidationFailed"

    def __init__(self, diagnostics: Iterable[GraphCadError]):
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else None
        summary = f"{len(self.diagnostics)} diagnostic(s)"
        if first is not None:
            summary += f"; first: {first}"
        super().__init__(summary, first.line if first else None, first.column if first else None)


# --- geometry / resolver ---

class NonPositiveDimension(GraphCadError):
    code = "NonPositiveDimension"


class UnknownFeature(GraphCadError):
    code = "UnknownFeature"


class NonUnitInput(GraphCadError):
    code = "NonUnitInput"


class UnresolvedReference(GraphCadError):
    code = "UnresolvedReference"


class DegenerateDirection(GraphCadError):
    code = "DegenerateDirection"


class ForwardReference(GraphCadError):
    code = "ForwardReference"


class DegeneratePlacement(GraphCadError):
    code = "DegeneratePlacement"


class UnknownTarget(GraphCadError):
    code = "UnknownTarget"


class EmptyStarSet(GraphCadError):
    code = "EmptyStarSet"


class CoincidentEndpoints(GraphCadError):
    code = "CoincidentEndpoints"


# --- planner / emitter ---

class OrderingCycle(GraphCadError):
    code = "OrderingCycle"


class UnsupportedDialect(GraphCadError):
    code = "UnsupportedDialect"


class UnsupportedVerb(GraphCadError):
    code = "UnsupportedVerb"


# --- metrics ---

class ZeroScale(GraphCadError):
    code = "ZeroScale"


class EmptyMatrix(GraphCadError):
    code = "EmptyMatrix"


class UnmappablePartName(GraphCadError):
    code = "UnmappablePartName"


# --- curriculum / config ---

class EmptyDataset(GraphCadError):
    code = "EmptyDataset"


class ProviderFailure(GraphCadError):
    code = "ProviderFailure"

    def __init__(self, message: str, seed_id: str | None = None):
        super().__init__(message)
        self.seed_id = seed_id

    def to_dict(self) -> dict[str, Any]:
        data = super().to_dict()
        data["seed"] = self.seed_id
        return data


class NonMonotoneDataset(GraphCadError):
    code = "NonMonotoneDataset"


class InvalidConfig(GraphCadError):
    code = "InvalidConfig"


def diagnostics_report(errors: GraphCadError | Iterable[GraphCadError] = ()) -> dict[str, Any]:
    """진단 리포트 생성: {"ok": bool, "diagnostics": [...]}"""
    if isinstance(errors, ValidationFailed):
        items = errors.diagnostics
    elif isinstance(errors, GraphCadError):
        items = [errors]
    else:
        items = list(errors)
    return {"ok": not items, "diagnostics": [e.to_dict() for e in items]}
