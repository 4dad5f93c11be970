#!/usr/bin/env python3
"""구조 인지 점진 커리큘럼 루프

매 반복마다:
  1. Trainer 로 현재 데이터셋 학습
  2. 카테고리 빈도 역가중 샘플링으로 시드 선택
  3. 시드별 능력 수준(L=0..3) 탐색 (낮은 레벨부터, 첫 실패에서 중단)
  4. 경계 레벨(L, L+1)에서 CoGenerator 로 후보 생성 -> Discriminator 가 Match 인 것만 추가

프로바이더는 동기 호출 인터페이스(Protocol)이며 테스트/데모용으로
JSON 스크립트 기반 mock 구현을 함께 제공한다.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from graph_errors import EmptyDataset, GraphCadError, InvalidConfig, NonMonotoneDataset, ProviderFailure

logger = logging.getLogger(__name__)

LEVELS = (1, 2, 3)
LEVEL_LABELS = {1: "Easy", 2: "Intermediate", 3: "Advanced"}


class Verdict(str, enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    ERROR = "Error"


@dataclass(frozen=True)
class SeedRecord:
    id: str
    category: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.category:
            raise InvalidConfig(f"seed {self.id!r} has an empty category")

    @classmethod
    def from_json(cls, item: Mapping[str, Any]) -> "SeedRecord":
        try:
            return cls(str(item["id"]), str(item.get("category") or ""), dict(item.get("payload") or {}))
        except KeyError:
            raise InvalidConfig("seed record is missing 'id'") from None

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "category": self.category, "payload": dict(self.payload)}


@dataclass(frozen=True)
class CurriculumConfig:
    sample_proportion: float = 0.1
    threshold: float = 0.8
    variants_per_level: int = 5
    max_iterations: int = 3
    rng_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.sample_proportion <= 1:
            raise InvalidConfig(f"sample_proportion must be in (0, 1], got {self.sample_proportion}")
        if not 0 <= self.threshold <= 1:
            raise InvalidConfig(f"threshold must be in [0, 1], got {self.threshold}")
        if self.variants_per_level < 1:
            raise InvalidConfig("variants_per_level must be >= 1")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "CurriculumConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise InvalidConfig(f"unknown curriculum option(s): {', '.join(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class BoundaryResult:
    seed_id: str
    level: int
    accuracies: tuple[tuple[int, float], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed_id,
            "level": self.level,
            "accuracies": {str(lv): acc for lv, acc in self.accuracies},
        }


# ============================================================================
# Provider interfaces
# ============================================================================


class Trainer(Protocol):
    def train(self, dataset: Sequence[SeedRecord], previous_state: Any) -> Any: ...


class ProblemGenerator(Protocol):
    def generate(self, seed: SeedRecord, level: int, k: int) -> Sequence[Any]: ...


class Solver(Protocol):
    def solve(self, state: Any, seed: SeedRecord, problem: Any) -> Any: ...


class Discriminator(Protocol):
    def judge(self, output: Any, reference: Any) -> Verdict | str: ...


class CoGenerator(Protocol):
    def generate(self, seed: SeedRecord, level: int) -> Sequence[SeedRecord]: ...


@dataclass
class Providers:
    trainer: Trainer
    problem_generator: ProblemGenerator
    solver: Solver
    discriminator: Discriminator
    co_generator: CoGenerator


def _call(seed_id: str | None, what: str, fn, *args):
    try:
        return fn(*args)
    except GraphCadError:
        raise
    except Exception as e:
        raise ProviderFailure(f"{what} failed: {e}", seed_id) from e


# ============================================================================
# Loop pieces
# ============================================================================


def category_aware_sample(
    dataset: Sequence[SeedRecord], proportion: float, rng: np.random.Generator
) -> list[SeedRecord]:
    """ceil(α·|D|) 개를 카테고리 빈도의 역수 가중치로 비복원 추출"""
    if not dataset:
        raise EmptyDataset("cannot sample from an empty dataset")
    n = min(len(dataset), max(1, math.ceil(proportion * len(dataset) - 1e-9)))
    counts = Counter(s.category for s in dataset)
    weights = np.array([1.0 / counts[s.category] for s in dataset])
    picked = rng.choice(len(dataset), size=n, replace=False, p=weights / weights.sum())
    return [dataset[int(i)] for i in picked]


def _verdict(value: Verdict | str) -> Verdict:
    try:
        return Verdict(value)
    except ValueError:
        return Verdict.ERROR


def capability_level(
    seed: SeedRecord,
    generator: ProblemGenerator,
    solver: Solver,
    discriminator: Discriminator,
    k: int,
    threshold: float,
    state: Any = None,
) -> BoundaryResult:
    """레벨 1..3 을 차례로 시험해 acc >= τ 를 연속 통과한 최고 레벨"""
    level = 0
    accuracies: list[tuple[int, float]] = []
    for lv in LEVELS:
        problems = list(_call(seed.id, f"problem generator (level {lv})", generator.generate, seed, lv, k))
        correct = 0
        for problem in problems:
            output = _call(seed.id, "solver", solver.solve, state, seed, problem)
            verdict = _verdict(_call(seed.id, "discriminator", discriminator.judge, output, problem))
            correct += verdict is Verdict.MATCH
        acc = correct / k
        accuracies.append((lv, acc))
        if acc < threshold:
            break
        level = lv
    return BoundaryResult(seed.id, level, tuple(accuracies))


def boundary_targets(level: int) -> set[int]:
    if level not in (0, *LEVELS):
        raise ValueError(f"capability level must be 0..3, got {level}")
    targets = set()
    if level >= 1:
        targets.add(level)
    if level < LEVELS[-1]:
        targets.add(level + 1)
    return targets


def run_sapcl(
    dataset: Sequence[SeedRecord],
    providers: Providers,
    config: CurriculumConfig,
) -> dict[str, Any]:
    """커리큘럼 루프 실행 -> 반복별 리포트"""
    if not dataset:
        raise EmptyDataset("curriculum needs a non-empty seed dataset")
    rng = np.random.default_rng(config.rng_seed)
    current = list(dataset)
    known_ids = {s.id for s in current}
    state: Any = None
    iterations: list[dict[str, Any]] = []
    status = "max_iterations"

    for t in range(1, config.max_iterations + 1):
        state = _call(None, "trainer", providers.trainer.train, list(current), state)
        seeds = category_aware_sample(current, config.sample_proportion, rng)

        def explore(seed: SeedRecord) -> BoundaryResult:
            return capability_level(
                seed, providers.problem_generator, providers.solver, providers.discriminator,
                config.variants_per_level, config.threshold, state,
            )

        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                boundaries = list(pool.map(explore, seeds))
        else:
            boundaries = [explore(s) for s in seeds]

        target_counts: Counter[int] = Counter()
        generated = 0
        valid: list[SeedRecord] = []
        for seed, boundary in zip(seeds, boundaries):
            for lv in sorted(boundary_targets(boundary.level)):
                target_counts[lv] += 1
                candidates = _call(seed.id, f"co-generator (level {lv})", providers.co_generator.generate, seed, lv)
                for candidate in candidates:
                    generated += 1
                    verdict = _verdict(_call(seed.id, "discriminator", providers.discriminator.judge, candidate, seed))
                    if verdict is Verdict.MATCH and candidate.id not in known_ids:
                        known_ids.add(candidate.id)
                        valid.append(candidate)

        before = len(current)
        nxt = current + valid
        if len(nxt) < before:
            raise NonMonotoneDataset(f"dataset shrank from {before} to {len(nxt)}")
        current = nxt

        histogram = Counter(b.level for b in boundaries)
        iterations.append({
            "iteration": t,
            "dataset_size": before,
            "sampled": [s.id for s in seeds],
            "boundaries": [b.to_dict() for b in boundaries],
            "level_histogram": {str(lv): histogram.get(lv, 0) for lv in (0, *LEVELS)},
            "targets": {LEVEL_LABELS[lv]: target_counts.get(lv, 0) for lv in LEVELS},
            "generated": generated,
            "added": len(valid),
            "next_dataset_size": len(current),
        })
        logger.info("iteration %d: %d sampled, %d/%d candidates kept, dataset %d -> %d",
                    t, len(seeds), len(valid), generated, before, len(current))
        if not valid:
            status = "converged"
            break

    return {
        "status": status,
        "rng_seed": config.rng_seed,
        "iterations": iterations,
        "final_dataset_size": len(current),
        "dataset": [s.id for s in current],
    }


# ============================================================================
# Mock providers (JSON 스크립트 기반)
# ============================================================================


class MockTrainer:
    def __init__(self):
        self.calls: list[int] = []

    def train(self, dataset: Sequence[SeedRecord], previous_state: Any) -> Any:
        self.calls.append(len(dataset))
        round_no = (previous_state or {}).get("round", 0) + 1
        return {"round": round_no, "size": len(dataset)}


class MockProblemGenerator:
    def __init__(self):
        self.calls: list[tuple[str, int]] = []

    def generate(self, seed: SeedRecord, level: int, k: int) -> list[dict[str, Any]]:
        self.calls.append((seed.id, level))
        return [{"seed": seed.id, "level": level, "variant": v} for v in range(k)]


class MockSolver:
    def solve(self, state: Any, seed: SeedRecord, problem: Any) -> dict[str, Any]:
        return {"problem": problem, "round": (state or {}).get("round")}


class MockDiscriminator:
    """verdicts: {"default": {"1": "pass", ...}, "seeds": {"<id>": {"3": ["match", "mismatch"]}}}"""

    _ALIASES = {"pass": Verdict.MATCH, "match": Verdict.MATCH, "fail": Verdict.MISMATCH,
                "mismatch": Verdict.MISMATCH, "error": Verdict.ERROR}

    def __init__(self, verdicts: Mapping[str, Any] | None = None):
        verdicts = verdicts or {}
        self.default = dict(verdicts.get("default") or {})
        self.per_seed = {k: dict(v) for k, v in (verdicts.get("seeds") or {}).items()}

    def _lookup(self, seed_id: str, level: int, variant: int) -> Verdict:
        script = self.per_seed.get(seed_id, {})
        entry = script.get(str(level), self.default.get(str(level), "fail"))
        if isinstance(entry, list):
            entry = entry[variant] if variant < len(entry) else "fail"
        try:
            return self._ALIASES[str(entry).lower()]
        except KeyError:
            raise InvalidConfig(f"unknown scripted verdict {entry!r}") from None

    def judge(self, output: Any, reference: Any) -> Verdict:
        if isinstance(output, SeedRecord):
            return Verdict.MATCH if output.payload.get("valid") else Verdict.MISMATCH
        problem = output["problem"]
        return self._lookup(problem["seed"], problem["level"], problem["variant"])


class MockCoGenerator:
    """레벨마다 candidates_per_level 개를 만들고 앞의 valid_per_level 개만 유효로 표시"""

    def __init__(self, candidates_per_level: int = 2, valid_per_level: int = 1):
        if not 0 <= valid_per_level <= candidates_per_level:
            raise InvalidConfig("valid_per_level must be between 0 and candidates_per_level")
        self.candidates_per_level = candidates_per_level
        self.valid_per_level = valid_per_level
        self.counter = 0
        self.calls: list[tuple[str, int]] = []

    def generate(self, seed: SeedRecord, level: int) -> list[SeedRecord]:
        self.calls.append((seed.id, level))
        out = []
        for j in range(self.candidates_per_level):
            self.counter += 1
            out.append(SeedRecord(
                f"{seed.id}/L{level}/{self.counter}",
                seed.category,
                {"parent": seed.id, "level": level, "label": LEVEL_LABELS[level], "valid": j < self.valid_per_level},
            ))
        return out


def mock_providers(script: Mapping[str, Any]) -> Providers:
    cogen = script.get("cogen") or {}
    return Providers(
        trainer=MockTrainer(),
        problem_generator=MockProblemGenerator(),
        solver=MockSolver(),
        discriminator=MockDiscriminator(script.get("verdicts")),
        co_generator=MockCoGenerator(
            int(cogen.get("candidates_per_level", 2)), int(cogen.get("valid_per_level", 1))
        ),
    )


def run_mock(script: Mapping[str, Any], rng_seed: int | None = None) -> dict[str, Any]:
    """mock 스크립트(JSON) 하나로 전체 루프 실행"""
    dataset = [SeedRecord.from_json(item) for item in script.get("dataset") or []]
    options = dict(script.get("config") or {})
    if rng_seed is not None:
        options["rng_seed"] = rng_seed
    return run_sapcl(dataset, mock_providers(script), CurriculumConfig.from_json(options))
