"""Slide-by-slide simulation loop and the two experiment drivers."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from ..dataset import StudentRecord
from ..llm.parsing import STEP_SCHEMA, ParseFailure, parse_structured
from ..llm.provider import ChatProvider, ChatRequest, ProviderError
from ..model import COGNITIVE_FIELDS, AnswerRecord, BehaviorRecord, CognitiveState, Lecture, Slide
from ..persona import PersonaProfile, sample_persona
from .prompts import MemoryStore, SimulationConfig, build_prompt, correction_request, persona_text

log = logging.getLogger(__name__)

FALLBACK_CHOICE = "A"


def agent_seed(seed: int, agent_index: int) -> int:
    """Per-agent seed: stable for an agent regardless of cohort size."""
    return seed ^ agent_index


@dataclass
class AgentState:
    agent_index: int
    student_id: str
    persona: Optional[PersonaProfile]
    seed: int
    memory: MemoryStore


@dataclass
class StepOutput:
    slide_index: int
    behaviors: list[BehaviorRecord]
    answers: list[AnswerRecord]
    reflection_text: str
    raw_response: str
    exchanges: list[dict[str, Any]] = field(default_factory=list)
    provider_attempts: int = 0
    parse_attempts: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    fallback: bool = False


class StepError(Exception):
    """Provider failure inside a slide step; carries the accounting so far."""

    def __init__(self, slide_index: int, cause: Exception, partial: StepOutput):
        self.slide_index = slide_index
        self.cause = cause
        self.partial = partial
        super().__init__(f"slide {slide_index}: {cause}")


@dataclass
class AgentRun:
    agent_index: int
    student_id: str
    persona: Optional[PersonaProfile]
    seed: int
    steps: list[StepOutput] = field(default_factory=list)
    error: Optional[str] = None
    failed_step: Optional[StepOutput] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def record(self) -> StudentRecord:
        return StudentRecord(
            self.student_id,
            self.persona,
            tuple(b for s in self.steps for b in s.behaviors),
            tuple(a for s in self.steps for a in s.answers),
        )

    @property
    def exchanges(self) -> list[dict[str, Any]]:
        steps = self.steps + ([self.failed_step] if self.failed_step else [])
        return [e for s in steps for e in s.exchanges]

    def accounting(self) -> dict[str, Any]:
        steps = self.steps + ([self.failed_step] if self.failed_step else [])
        return {
            "student_id": self.student_id,
            "provider_attempts": sum(s.provider_attempts for s in steps),
            "parse_attempts": sum(s.parse_attempts for s in steps),
            "prompt_tokens": sum(s.prompt_tokens for s in steps),
            "completion_tokens": sum(s.completion_tokens for s in steps),
            "fallback_slides": [s.slide_index for s in self.steps if s.fallback],
            "error": self.error,
        }


def _validate_step(parsed: dict[str, Any], slide: Slide) -> Optional[str]:
    rows = parsed["transcripts"]
    if len(rows) != len(slide.transcripts):
        return f"expected {len(slide.transcripts)} transcript entries, got {len(rows)}"
    ids = set(slide.aoi_ids)
    for pos, row in enumerate(rows, start=1):
        if row["index"] != pos:
            return f"transcripts[{pos - 1}].index should be {pos}, got {row['index']}"
        for name in ("gaze_aoi", "motor_aoi"):
            if row[name] not in ids:
                return f"transcripts[{pos - 1}].{name}={row[name]} is not an AOI of slide {slide.index}"
    got = {a["question_id"] for a in parsed["answers"]}
    missing = [qid for qid in slide.question_ids if qid not in got]
    if missing:
        return f"missing answers for questions {missing}"
    return None


def _fallback(slide: Slide, memory: MemoryStore) -> tuple[list[BehaviorRecord], list[AnswerRecord]]:
    cog = memory.mean_cognitive() or CognitiveState.uniform(0.5)
    behaviors = [
        BehaviorRecord(slide.index, t.index, t.pace_aoi, t.pace_aoi, cog, fallback=True) for t in slide.transcripts
    ]
    answers = [AnswerRecord.grade(q, FALLBACK_CHOICE, fallback=True) for q in slide.questions]
    return behaviors, answers


def run_slide_step(
    agent: AgentState,
    slide: Slide,
    config: SimulationConfig,
    provider: ChatProvider,
) -> StepOutput:
    """Prompt, call, parse; re-prompt on unusable output, then fall back.

    After ``config.max_parse_retries`` failed corrections, every transcript
    gets the pace AOI for gaze and motor, the memory's mean cognitive state
    (0.5 everywhere on the first slide) and every question choice "A".
    """
    base = build_prompt(
        agent.persona,
        slide,
        agent.memory,
        config,
        context={"agent_index": agent.agent_index, "agent_seed": agent.seed},
    )
    out = StepOutput(slide.index, [], [], "", "")
    request: ChatRequest = base
    for parse_attempt in range(1, config.max_parse_retries + 2):
        try:
            completion = provider.complete(request)
        except ProviderError as exc:
            raise StepError(slide.index, exc, out) from exc
        out.provider_attempts += completion.attempts
        out.parse_attempts = parse_attempt
        out.prompt_tokens += completion.prompt_tokens
        out.completion_tokens += completion.completion_tokens
        out.raw_response = completion.text
        out.exchanges.append(
            {
                "slide_index": slide.index,
                "parse_attempt": parse_attempt,
                "system": request.system_text,
                "prompt": request.user_text,
                "response": completion.text,
            }
        )
        parsed = parse_structured(completion.text, STEP_SCHEMA)
        reason = parsed.reason if isinstance(parsed, ParseFailure) else _validate_step(parsed, slide)
        if reason is None:
            out.reflection_text = parsed["reasoning"]
            out.behaviors = [
                BehaviorRecord(
                    slide.index,
                    row["index"],
                    row["gaze_aoi"],
                    row["motor_aoi"],
                    CognitiveState(**{f: row[f] for f in COGNITIVE_FIELDS}),
                )
                for row in parsed["transcripts"]
            ]
            chosen = {a["question_id"]: a["choice"] for a in parsed["answers"]}
            out.answers = [AnswerRecord.grade(q, chosen[q.id]) for q in slide.questions]
            return out
        log.info("agent %s slide %d: unusable reply (%s)", agent.student_id, slide.index, reason)
        request = correction_request(base, reason, config.template_version)
    out.behaviors, out.answers = _fallback(slide, agent.memory)
    out.fallback = True
    return out


MemorySource = Callable[[Slide, list[StepOutput]], MemoryStore]


def simulate_agent(
    agent: AgentState,
    lecture: Lecture,
    config: SimulationConfig,
    provider: ChatProvider,
    next_memory: MemorySource,
) -> AgentRun:
    """Run one agent through every slide in order.

    ``next_memory(slide, steps)`` builds the memory for the slide after
    ``slide`` once its step has finished.
    """
    run = AgentRun(agent.agent_index, agent.student_id, agent.persona, agent.seed)
    for slide in lecture.slides:
        try:
            step = run_slide_step(agent, slide, config, provider)
        except StepError as exc:
            run.error = str(exc)
            run.failed_step = exc.partial
            log.warning("agent %s failed: %s", agent.student_id, exc)
            return run
        run.steps.append(step)
        agent.memory = next_memory(slide, run.steps)
    return run


def _run_pool(n: int, fn: Callable[[int], AgentRun], workers: int) -> list[AgentRun]:
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def run_experiment1(
    lecture: Lecture,
    real_records: Sequence[StudentRecord],
    config: SimulationConfig,
    provider: ChatProvider,
    workers: int = 4,
) -> list[AgentRun]:
    """Replay: before each slide the memory holds the real student's previous slide."""
    for rec in real_records:
        rec.validate_against(lecture)

    def one(i: int) -> AgentRun:
        rec = real_records[i]
        text = persona_text(rec.persona)
        agent = AgentState(i, rec.student_id, rec.persona, agent_seed(config.seed, i), MemoryStore.empty(text))

        def real_memory(slide: Slide, steps: list[StepOutput]) -> MemoryStore:
            return MemoryStore.from_behaviors(text, slide, rec.slide_behaviors(slide.index))

        return simulate_agent(agent, lecture, config, provider, real_memory)

    return _run_pool(len(real_records), one, workers)


def run_experiment2(
    lecture: Lecture,
    cohort_size: int,
    config: SimulationConfig,
    provider: ChatProvider,
    workers: int = 4,
) -> list[AgentRun]:
    """Virtual cohort: personas sampled per agent seed, memory is self-generated."""
    if cohort_size < 1:
        raise ValueError("cohort_size must be >= 1")

    def one(i: int) -> AgentRun:
        seed = agent_seed(config.seed, i)
        persona = sample_persona(seed)
        text = persona_text(persona)
        agent = AgentState(i, f"virtual-{i:04d}", persona, seed, MemoryStore.empty(text))

        def own_memory(slide: Slide, steps: list[StepOutput]) -> MemoryStore:
            return MemoryStore.from_behaviors(text, slide, steps[-1].behaviors)

        return simulate_agent(agent, lecture, config, provider, own_memory)

    return _run_pool(cohort_size, one, workers)
