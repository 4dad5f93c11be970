#!/usr/bin/env python3
"""평가 설정 로더

조회 순서: 명시 경로(--config) -> 환경변수 GRAPH_CAD_CONFIG -> 기본값.
YAML/JSON 모두 yaml.safe_load 로 읽는다.

    weights: {w_s: 0.25, w_p: 0.25, w_o: 0.25, w_a: 0.25, gamma: 1.0}
    hla:     {alpha: 0.5}
    gcs:     {contact: 0.001, aligned: 0.001, orientation_deg: 5.0}
"""
from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from graph_errors import InvalidConfig
from metrics import GcsTolerances, HlaConfig, MetricWeights

logger = logging.getLogger(__name__)

CONFIG_ENV = "GRAPH_CAD_CONFIG"


def _env(name: str) -> str | None:
    v = os.getenv(name)
    if v is None:
        return None
    v = v.strip()
    return v or None


@dataclass(frozen=True)
class EvalConfig:
    weights: MetricWeights = field(default_factory=MetricWeights)
    hla: HlaConfig = field(default_factory=HlaConfig)
    gcs: GcsTolerances = field(default_factory=GcsTolerances)
    source: str | None = None

    def with_overrides(self, **values: float | None) -> "EvalConfig":
        """CLI 플래그 값 덮어쓰기 (None 은 무시)"""
        weights = {k: v for k, v in values.items() if v is not None and k in _field_names(MetricWeights)}
        hla = {k: v for k, v in values.items() if v is not None and k in _field_names(HlaConfig)}
        return dataclasses.replace(
            self,
            weights=_build(MetricWeights, {**dataclasses.asdict(self.weights), **weights}, "weights"),
            hla=_build(HlaConfig, {**dataclasses.asdict(self.hla), **hla}, "hla"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": dataclasses.asdict(self.weights),
            "hla": dataclasses.asdict(self.hla),
            "gcs": dataclasses.asdict(self.gcs),
            "source": self.source,
        }


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, values: Mapping[str, Any], section: str):
    unknown = sorted(set(values) - _field_names(cls))
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {section}: {', '.join(unknown)}")
    try:
        coerced = {k: float(v) for k, v in values.items()}
    except (TypeError, ValueError):
        raise InvalidConfig(f"{section} values must be numbers") from None
    return cls(**coerced)


def parse_eval_config(doc: Any, source: str | None = None) -> EvalConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, Mapping):
        raise InvalidConfig("config root must be a mapping")
    unknown = sorted(set(doc) - {"weights", "hla", "gcs"})
    if unknown:
        raise InvalidConfig(f"unknown config section(s): {', '.join(unknown)}")
    sections = {}
    for key in ("weights", "hla", "gcs"):
        value = doc.get(key) or {}
        if not isinstance(value, Mapping):
            raise InvalidConfig(f"section {key} must be a mapping")
        sections[key] = value
    gcs = _build(GcsTolerances, sections["gcs"], "gcs")
    if min(gcs.contact, gcs.aligned, gcs.orientation_deg) <= 0:
        raise InvalidConfig("gcs tolerances must be > 0")
    return EvalConfig(
        weights=_build(MetricWeights, sections["weights"], "weights"),
        hla=_build(HlaConfig, sections["hla"], "hla"),
        gcs=gcs,
        source=source,
    )


def load_eval_config(path: str | Path | None = None) -> EvalConfig:
    """설정 파일 로드 (경로/환경변수가 없으면 기본값)"""
    chosen = str(path) if path else _env(CONFIG_ENV)
    if not chosen:
        return EvalConfig()
    config_path = Path(chosen)
    if not config_path.is_file():
        raise InvalidConfig(f"config file not found: {config_path}")
    try:
        doc = yaml.safe_load(config_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise InvalidConfig(f"invalid YAML in {config_path}: {e}") from None
    logger.debug("loaded evaluation config from %s", config_path)
    return parse_eval_config(doc, str(config_path))
