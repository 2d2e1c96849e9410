"""Prompt assembly from versioned template files.

A step prompt is a sequence of bracketed blocks::

    [PERSONA] [CURRENT SLIDE] [DEMONSTRATION]? [PRIORS]? [REFLECT FIRST]? [OUTPUT SCHEMA]

The demonstration block carries one line per (transcript, memory layer) so
ablations remove whole lines and nothing else.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional

from ..llm.provider import ChatRequest
from ..model import COGNITIVE_FIELDS, BehaviorRecord, CognitiveState, Slide
from ..persona import PersonaProfile, render_persona_text

PRIOR_MODES = ("cognitive_priors", "standard")
ABLATIONS = ("none", "M", "P", "C", "D")

UNKNOWN_PERSONA_TEXT = "No persona information is available for this student; infer it from the demonstration."


@dataclass(frozen=True)
class SimulationConfig:
    prior_mode: str = "cognitive_priors"
    drop_motor: bool = False
    drop_gaze: bool = False
    drop_cognitive: bool = False
    drop_demonstration: bool = False
    seed: int = 0
    temperature: float = 0.0
    max_tokens: int = 2048
    model_name: str = "gpt-3.5-turbo"
    max_parse_retries: int = 2
    template_version: str = "v1"

    def __post_init__(self) -> None:
        if self.prior_mode not in PRIOR_MODES:
            raise ValueError(f"prior_mode must be one of {PRIOR_MODES}, got {self.prior_mode!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def with_ablation(cls, ablation: str, **kwargs) -> "SimulationConfig":
        if ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
        return cls(
            drop_motor=ablation == "M",
            drop_gaze=ablation == "P",
            drop_cognitive=ablation == "C",
            drop_demonstration=ablation == "D",
            **kwargs,
        )

    @property
    def ablation_label(self) -> str:
        if self.drop_demonstration:
            return "xD"
        dropped = "".join(c for c, on in (("M", self.drop_motor), ("P", self.drop_gaze), ("C", self.drop_cognitive)) if on)
        return "x" + dropped if dropped else "All"


@dataclass(frozen=True)
class MemoryStore:
    """Layered memory of the most recent completed slide only."""

    persona_text: str
    slide: Optional[Slide] = None
    gaze: tuple[Optional[int], ...] = ()
    motor: tuple[Optional[int], ...] = ()
    cognitive: tuple[CognitiveState, ...] = field(default=())

    def __post_init__(self) -> None:
        n = 0 if self.slide is None else len(self.slide.transcripts)
        if not len(self.gaze) == len(self.motor) == len(self.cognitive) == n:
            raise ValueError(f"memory layers must each hold {n} transcripts")

    @classmethod
    def empty(cls, persona_text: str) -> "MemoryStore":
        return cls(persona_text)

    @classmethod
    def from_behaviors(cls, persona_text: str, slide: Slide, behaviors: list[BehaviorRecord]) -> "MemoryStore":
        ordered = sorted(behaviors, key=lambda b: b.transcript_index)
        if any(b.slide_index != slide.index for b in ordered):
            raise ValueError("memory behaviours must all belong to the remembered slide")
        return cls(
            persona_text,
            slide,
            tuple(b.gaze_aoi for b in ordered),
            tuple(b.motor_aoi for b in ordered),
            tuple(b.cognitive for b in ordered),
        )

    @property
    def is_empty(self) -> bool:
        return self.slide is None

    def mean_cognitive(self) -> Optional[CognitiveState]:
        if not self.cognitive:
            return None
        n = len(self.cognitive)
        return CognitiveState.from_values(sum(c.as_tuple()[i] for c in self.cognitive) / n for i in range(6))


def persona_text(persona: Optional[PersonaProfile]) -> str:
    return UNKNOWN_PERSONA_TEXT if persona is None else render_persona_text(persona)


@lru_cache(maxsize=None)
def load_templates(version: str = "v1") -> dict[str, str]:
    root = resources.files("studentsim") / "templates" / version
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".txt"):
            out[entry.name[:-4]] = entry.read_text(encoding="utf-8").strip()
    if not out:
        raise FileNotFoundError(f"no prompt templates for version {version!r}")
    return out


def template_hash(version: str = "v1") -> str:
    h = hashlib.sha256()
    for name, text in sorted(load_templates(version).items()):
        h.update(name.encode() + b"\x00" + text.encode() + b"\x00")
    return h.hexdigest()


def prior_statements(version: str = "v1") -> list[str]:
    return [line for line in load_templates(version)["priors"].splitlines() if line.strip()]


def fill(template: str, **values: object) -> str:
    for k, v in values.items():
        template = template.replace("{{" + k + "}}", str(v))
    return template


def _aoi_text(aoi: Optional[int]) -> str:
    return "none" if aoi is None else str(aoi)


def format_cognitive(c: CognitiveState) -> str:
    return ", ".join(f"{name}={getattr(c, name):.4f}" for name in COGNITIVE_FIELDS)


def slide_block(slide: Slide) -> str:
    lines = ["[CURRENT SLIDE]", f"Slide {slide.index}", "AOIs:"]
    lines += [f"AOI {a.id}: {a.label}" for a in slide.aois]
    lines.append("Transcripts:")
    lines += [f"T{t.index} (teacher discussing AOI {t.pace_aoi}): {t.text}" for t in slide.transcripts]
    if slide.questions:
        lines.append("Questions:")
        for q in slide.questions:
            lines.append(f"Question {q.id}: {q.stem}")
            lines += [f"  {label}. {q.choices[label]}" for label in sorted(q.choices)]
    return "\n".join(lines)


def demonstration_block(memory: MemoryStore, config: SimulationConfig) -> Optional[str]:
    if config.drop_demonstration or memory.is_empty:
        return None
    s = memory.slide
    assert s is not None
    lines = [
        "[DEMONSTRATION]",
        f"Your behaviour on the previous slide (slide {s.index}).",
        f"Previous slide {s.index} AOIs:",
    ]
    lines += [f"AOI {a.id}: {a.label}" for a in s.aois]
    lines.append(f"Previous slide {s.index} transcripts:")
    lines += [f"T{t.index} (teacher discussing AOI {t.pace_aoi}): {t.text}" for t in s.transcripts]
    lines.append("Recorded behaviour per transcript:")
    for i, t in enumerate(s.transcripts):
        if not config.drop_gaze:
            lines.append(f"T{t.index} gaze AOI: {_aoi_text(memory.gaze[i])}")
        if not config.drop_motor:
            lines.append(f"T{t.index} motor AOI: {_aoi_text(memory.motor[i])}")
        if not config.drop_cognitive:
            lines.append(f"T{t.index} cognitive states: {format_cognitive(memory.cognitive[i])}")
    return "\n".join(lines)


def build_prompt(
    persona: Optional[PersonaProfile],
    slide: Slide,
    memory: MemoryStore,
    config: SimulationConfig,
    context: Optional[dict] = None,
) -> ChatRequest:
    tpl = load_templates(config.template_version)
    blocks = ["[PERSONA]\n" + persona_text(persona), slide_block(slide)]
    demo = demonstration_block(memory, config)
    if demo is not None:
        blocks.append(demo)
    if config.prior_mode == "cognitive_priors":
        priors = prior_statements(config.template_version)
        blocks.append("[PRIORS]\n" + "\n".join(f"{i}. {p}" for i, p in enumerate(priors, start=1)))
        reflect = tpl["reflect"]
        if slide.questions:
            reflect += "\n" + tpl["qa_cognitive"]
        blocks.append("[REFLECT FIRST]\n" + reflect)
    else:
        instruction = tpl["standard"]
        if slide.questions:
            instruction += "\n" + tpl["qa_standard"]
        blocks.append("[TASK]\n" + instruction)
    blocks.append(
        "[OUTPUT SCHEMA]\n"
        + fill(tpl["output_schema"], n_transcripts=len(slide.transcripts), n_questions=len(slide.questions))
    )
    ctx = {
        "persona": None if persona is None else persona.to_dict(),
        "slide_index": slide.index,
        "aoi_ids": list(slide.aoi_ids),
        "pace": slide.pace_sequence,
        "questions": [{"id": q.id, "correct": q.correct} for q in slide.questions],
    }
    ctx.update(context or {})
    return ChatRequest(
        system_text=tpl["system"],
        user_text="\n\n".join(blocks),
        temperature=config.temperature,
        max_tokens=config.max_tokens,
        model_name=config.model_name,
        context=ctx,
    )


def correction_request(request: ChatRequest, reason: str, version: str = "v1") -> ChatRequest:
    tpl = load_templates(version)
    return ChatRequest(
        system_text=request.system_text,
        user_text=request.user_text + "\n\n[CORRECTION]\n" + fill(tpl["correction"], reason=reason),
        temperature=request.temperature,
        max_tokens=request.max_tokens,
        model_name=request.model_name,
        context=request.context,
    )
