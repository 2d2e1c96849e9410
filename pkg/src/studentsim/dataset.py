"""JSONL file formats for lectures, raw recordings and student cohorts.

Also turns raw per-second recordings into per-transcript behaviour records:
the four binary cognitive states are averaged over the transcript window,
workload and curiosity come from gaze stationary and transition entropy.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .model import (
    AnswerRecord,
    BehaviorRecord,
    CognitiveState,
    Lecture,
    Slide,
    Transcript,
    ValidationError,
    map_point_to_aoi,
)
from .persona import PersonaProfile

FORMAT_VERSION = 1


class FormatError(ValueError):
    """A JSONL file could not be parsed or failed validation at ``line``."""

    def __init__(self, path: str | Path, line: int, message: str):
        self.path = str(path)
        self.line = line
        self.message = message
        super().__init__(f"{path}:{line}: {message}")


@dataclass(frozen=True)
class RawSecondSample:
    timestamp_s: int
    gaze_point: Optional[tuple[float, float]]
    mouse_point: Optional[tuple[float, float]]
    face_detected: bool
    confusion_click: bool

    def __post_init__(self) -> None:
        for name in ("gaze_point", "mouse_point"):
            pt = getattr(self, name)
            if pt is not None and not all(0.0 <= c <= 1.0 for c in pt):
                raise ValidationError(f"{name} {pt} outside [0,1]^2")


@dataclass(frozen=True)
class StudentRecord:
    student_id: str
    persona: Optional[PersonaProfile]
    behaviors: tuple[BehaviorRecord, ...]
    answers: tuple[AnswerRecord, ...] = field(default=())

    def slide_behaviors(self, slide_index: int) -> list[BehaviorRecord]:
        return [b for b in self.behaviors if b.slide_index == slide_index]

    def slide_answers(self, slide: Slide) -> list[AnswerRecord]:
        ids = set(slide.question_ids)
        return [a for a in self.answers if a.question_id in ids]

    def validate_against(self, lecture: Lecture) -> None:
        for slide in lecture.slides:
            recs = self.slide_behaviors(slide.index)
            if [b.transcript_index for b in recs] != [t.index for t in slide.transcripts]:
                raise ValidationError(
                    f"student {self.student_id}: slide {slide.index} has transcripts "
                    f"{[b.transcript_index for b in recs]}, lecture expects 1..{len(slide.transcripts)}"
                )
            for b in recs:
                b.validate_against(slide)
        n_slides = len(lecture.slides)
        stray = [b for b in self.behaviors if not 1 <= b.slide_index <= n_slides]
        if stray:
            raise ValidationError(f"student {self.student_id}: behaviour for unknown slide {stray[0].slide_index}")
        qids = {q.id: q for q in lecture.questions}
        for a in self.answers:
            q = qids.get(a.question_id)
            if q is None:
                raise ValidationError(f"student {self.student_id}: answer for unknown question {a.question_id}")
            if a.is_correct != (a.chosen == q.correct):
                raise ValidationError(f"student {self.student_id}: is_correct inconsistent for {a.question_id}")

    def to_dict(self) -> dict[str, Any]:
        slides: dict[int, list[dict]] = {}
        for b in self.behaviors:
            slides.setdefault(b.slide_index, []).append(b.to_dict())
        return {
            "version": FORMAT_VERSION,
            "student_id": self.student_id,
            "persona": None if self.persona is None else self.persona.to_dict(),
            "slides": [slides[k] for k in sorted(slides)],
            "answers": [a.to_dict() for a in self.answers],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StudentRecord":
        persona = d.get("persona")
        return cls(
            student_id=str(d["student_id"]),
            persona=None if persona is None else PersonaProfile.from_dict(persona),
            behaviors=tuple(BehaviorRecord.from_dict(b) for slide in d["slides"] for b in slide),
            answers=tuple(AnswerRecord.from_dict(a) for a in d.get("answers", ())),
        )


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise FormatError(path, lineno, "expected a JSON object")
            version = obj.get("version", FORMAT_VERSION)
            if version != FORMAT_VERSION:
                raise FormatError(path, lineno, f"unsupported format version {version!r}")
            yield lineno, obj


def dumps_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def load_lecture(path: str | Path) -> Lecture:
    slides = []
    for lineno, obj in _read_jsonl(path):
        try:
            slide = Slide.from_dict(obj)
            slide.validate()
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
            raise FormatError(path, lineno, msg) from None
        slides.append((lineno, slide))
    lecture = Lecture(tuple(s for _, s in slides))
    try:
        lecture.validate()
    except ValidationError as exc:
        raise FormatError(path, slides[-1][0] if slides else 0, str(exc)) from None
    return lecture


def save_lecture(lecture: Lecture, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in lecture.slides:
            fh.write(dumps_line({"version": FORMAT_VERSION, **s.to_dict()}) + "\n")


def export_cohort(records: Sequence[StudentRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(dumps_line(r.to_dict()) + "\n")


def load_cohort(path: str | Path, lecture: Optional[Lecture] = None) -> list[StudentRecord]:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            rec = StudentRecord.from_dict(obj)
            if lecture is not None:
                rec.validate_against(lecture)
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
            raise FormatError(path, lineno, msg) from None
        out.append(rec)
    return out


def _point(v: Any) -> Optional[tuple[float, float]]:
    if v is None:
        return None
    x, y = v
    return (float(x), float(y))


def load_raw_samples(path: str | Path) -> dict[str, list[RawSecondSample]]:
    """Read ``raw_samples.jsonl`` into per-student sample lists sorted by time."""
    by_student: dict[str, list[RawSecondSample]] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            s = RawSecondSample(
                timestamp_s=int(obj["t"]),
                gaze_point=_point(obj.get("gaze")),
                mouse_point=_point(obj.get("mouse")),
                face_detected=bool(obj["face"]),
                confusion_click=bool(obj.get("click", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            msg = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
            raise FormatError(path, lineno, msg) from None
        by_student.setdefault(str(obj["student_id"]), []).append(s)
    for samples in by_student.values():
        samples.sort(key=lambda s: s.timestamp_s)
    return by_student


def save_raw_samples(samples: dict[str, Sequence[RawSecondSample]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, seq in samples.items():
            for s in seq:
                fh.write(
                    dumps_line(
                        {
                            "version": FORMAT_VERSION,
                            "student_id": sid,
                            "t": s.timestamp_s,
                            "gaze": None if s.gaze_point is None else list(s.gaze_point),
                            "mouse": None if s.mouse_point is None else list(s.mouse_point),
                            "face": s.face_detected,
                            "click": s.confusion_click,
                        }
                    )
                    + "\n"
                )


def entropy_bits(counts: Iterable[int]) -> float:
    """Shannon entropy (base 2) of a histogram; 0 for empty or single-sample input."""
    counts = [c for c in counts if c > 0]
    n = sum(counts)
    if n <= 1:
        return 0.0
    h = -sum((c / n) * math.log2(c / n) for c in counts)
    return max(h, 0.0)


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def _window_samples(samples: Sequence[RawSecondSample], window: tuple[int, int]) -> list[RawSecondSample]:
    start, end = window
    if not start < end:
        raise ValueError(f"empty window {window}")
    inside = [s for s in samples if start <= s.timestamp_s < end]
    if not inside:
        raise ValueError(f"no samples inside window {window}")
    return inside


def derive_cognitive_states(
    samples: Sequence[RawSecondSample],
    slide: Slide,
    transcript: Transcript,
    window: Optional[tuple[int, int]] = None,
) -> CognitiveState:
    """Per-transcript cognitive state from per-second samples.

    Entropies are normalized by their maximum over the slide's K AOIs
    (log2 K for visited AOIs, log2 K^2 for AOI-to-AOI transitions) so every
    component lies in [0, 1]. Seconds with off-AOI or missing gaze are left
    out of both entropy distributions.
    """
    window = window if window is not None else transcript.window
    if window is None:
        raise ValueError(f"transcript {transcript.index} has no window")
    inside = _window_samples(samples, window)

    gaze = [None if s.gaze_point is None else map_point_to_aoi(s.gaze_point, slide) for s in inside]
    n = len(inside)
    valid_focus = sum(g is not None for g in gaze) / n
    following = sum(g == transcript.pace_aoi for g in gaze) / n
    engagement = sum(s.face_detected for s in inside) / n
    confusion = sum(s.confusion_click for s in inside) / n

    k = len(slide.aois)
    stationary = entropy_bits(Counter(g for g in gaze if g is not None).values())
    pairs = Counter((a, b) for a, b in zip(gaze, gaze[1:]) if a is not None and b is not None)
    transition = entropy_bits(pairs.values())
    if k > 1:
        workload = stationary / math.log2(k)
        curiosity = transition / math.log2(k * k)
    else:
        workload = curiosity = 0.0

    return CognitiveState(
        workload=_clamp01(workload),
        curiosity=_clamp01(curiosity),
        valid_focus=_clamp01(valid_focus),
        course_following=_clamp01(following),
        engagement=_clamp01(engagement),
        confusion=_clamp01(confusion),
    )


def _dominant_aoi(points: Iterable[Optional[tuple[float, float]]], slide: Slide) -> Optional[int]:
    counts = Counter(
        aoi for aoi in (None if p is None else map_point_to_aoi(p, slide) for p in points) if aoi is not None
    )
    if not counts:
        return None
    return min(counts, key=lambda a: (-counts[a], a))


def record_from_raw(
    lecture: Lecture,
    student_id: str,
    samples: Sequence[RawSecondSample],
    persona: Optional[PersonaProfile] = None,
    answers: Sequence[AnswerRecord] = (),
) -> StudentRecord:
    """Reduce a per-second recording to per-transcript behaviour.

    The transcript's gaze and motor AOI are the most frequent AOI in its
    window (ties to the lower id); a window without any on-AOI sample
    yields None.
    """
    behaviors = []
    for slide in lecture.slides:
        for t in slide.transcripts:
            if t.window is None:
                raise ValueError(f"slide {slide.index} transcript {t.index} has no window")
            inside = _window_samples(samples, t.window)
            behaviors.append(
                BehaviorRecord(
                    slide_index=slide.index,
                    transcript_index=t.index,
                    gaze_aoi=_dominant_aoi((s.gaze_point for s in inside), slide),
                    motor_aoi=_dominant_aoi((s.mouse_point for s in inside), slide),
                    cognitive=derive_cognitive_states(inside, slide, t),
                )
            )
    return StudentRecord(student_id, persona, tuple(behaviors), tuple(answers))
