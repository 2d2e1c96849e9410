"""Domain types shared across the simulator and AOI geometry helpers.

Coordinates are normalized screen units in [0, 1]. AOI ids are 1-based and
contiguous per slide. Every type here is a frozen dataclass with a
``to_dict``/``from_dict`` pair used by the JSONL file formats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

CHOICE_LABELS = ("A", "B", "C", "D")

COGNITIVE_FIELDS = (
    "workload",
    "curiosity",
    "valid_focus",
    "course_following",
    "engagement",
    "confusion",
)


class ValidationError(ValueError):
    """Raised when a domain object violates one of its invariants."""


@dataclass(frozen=True)
class AOI:
    id: int
    bbox: tuple[float, float, float, float]
    label: str

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
            raise ValidationError(f"AOI {self.id}: invalid bbox {self.bbox}")
        object.__setattr__(self, "bbox", (float(x0), float(y0), float(x1), float(y1)))

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.bbox
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.bbox
        return x0 <= x <= x1 and y0 <= y <= y1

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "bbox": list(self.bbox), "label": self.label}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AOI":
        return cls(id=int(d["id"]), bbox=tuple(d["bbox"]), label=str(d["label"]))


@dataclass(frozen=True)
class Transcript:
    """One spoken sentence of the lecture.

    ``window`` is the half-open second range ``[start, end)`` of the
    recording that belongs to this sentence; it is only needed when deriving
    behaviours from raw per-second samples.
    """

    index: int
    text: str
    pace_aoi: int
    window: Optional[tuple[int, int]] = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"index": self.index, "text": self.text, "pace_aoi": self.pace_aoi}
        if self.window is not None:
            d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transcript":
        window = d.get("window")
        return cls(
            index=int(d["index"]),
            text=str(d["text"]),
            pace_aoi=int(d["pace_aoi"]),
            window=None if window is None else (int(window[0]), int(window[1])),
        )


@dataclass(frozen=True)
class Question:
    id: str
    stem: str
    choices: dict[str, str]
    correct: str
    slide_index: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "stem": self.stem,
            "choices": dict(self.choices),
            "correct": self.correct,
            "slide_index": self.slide_index,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Question":
        return cls(
            id=str(d["id"]),
            stem=str(d["stem"]),
            choices={str(k): str(v) for k, v in dict(d["choices"]).items()},
            correct=str(d["correct"]),
            slide_index=int(d["slide_index"]),
        )


@dataclass(frozen=True)
class Slide:
    index: int
    aois: tuple[AOI, ...]
    transcripts: tuple[Transcript, ...]
    questions: tuple[Question, ...] = ()

    @property
    def aoi_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.aois)

    @property
    def question_ids(self) -> tuple[str, ...]:
        return tuple(q.id for q in self.questions)

    @property
    def pace_sequence(self) -> list[int]:
        return [t.pace_aoi for t in self.transcripts]

    def aoi(self, aoi_id: int) -> AOI:
        for a in self.aois:
            if a.id == aoi_id:
                return a
        raise KeyError(f"slide {self.index} has no AOI {aoi_id}")

    def validate(self) -> None:
        if not self.aois:
            raise ValidationError(f"slide {self.index}: no AOIs")
        if not self.transcripts:
            raise ValidationError(f"slide {self.index}: no transcripts")
        ids = [a.id for a in self.aois]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValidationError(f"slide {self.index}: AOI ids {ids} are not unique and contiguous from 1")
        idx = [t.index for t in self.transcripts]
        if idx != list(range(1, len(idx) + 1)):
            raise ValidationError(f"slide {self.index}: transcript indices {idx} are not 1..n in order")
        for t in self.transcripts:
            if not t.text.strip():
                raise ValidationError(f"slide {self.index} transcript {t.index}: empty text")
            if t.pace_aoi not in ids:
                raise ValidationError(
                    f"slide {self.index} transcript {t.index}: pace_aoi={t.pace_aoi} is not an AOI on this slide"
                )
            if t.window is not None and not t.window[0] < t.window[1]:
                raise ValidationError(f"slide {self.index} transcript {t.index}: empty window {t.window}")
        for q in self.questions:
            if sorted(q.choices) != list(CHOICE_LABELS):
                raise ValidationError(f"question {q.id}: expected exactly 4 choices A-D, got {sorted(q.choices)}")
            if q.correct not in CHOICE_LABELS:
                raise ValidationError(f"question {q.id}: correct answer {q.correct!r} not in A-D")
            if q.slide_index != self.index:
                raise ValidationError(f"question {q.id}: slide_index {q.slide_index} but attached to slide {self.index}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "aois": [a.to_dict() for a in self.aois],
            "transcripts": [t.to_dict() for t in self.transcripts],
            "questions": [q.to_dict() for q in self.questions],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Slide":
        return cls(
            index=int(d["index"]),
            aois=tuple(AOI.from_dict(a) for a in d["aois"]),
            transcripts=tuple(Transcript.from_dict(t) for t in d["transcripts"]),
            questions=tuple(Question.from_dict(q) for q in d.get("questions", ())),
        )


@dataclass(frozen=True)
class Lecture:
    slides: tuple[Slide, ...]

    def validate(self) -> None:
        if not self.slides:
            raise ValidationError("lecture has no slides")
        for pos, s in enumerate(self.slides, start=1):
            if s.index != pos:
                raise ValidationError(f"slide indices not contiguous: expected {pos}, got {s.index}")
            s.validate()
        seen: set[str] = set()
        for q in self.questions:
            if q.id in seen:
                raise ValidationError(f"duplicate question id {q.id}")
            seen.add(q.id)

    def slide(self, index: int) -> Slide:
        return self.slides[index - 1]

    @property
    def questions(self) -> list[Question]:
        return [q for s in self.slides for q in s.questions]

    def question(self, qid: str) -> Question:
        for q in self.questions:
            if q.id == qid:
                return q
        raise KeyError(qid)


@dataclass(frozen=True)
class CognitiveState:
    workload: float
    curiosity: float
    valid_focus: float
    course_following: float
    engagement: float
    confusion: float

    def __post_init__(self) -> None:
        for name in COGNITIVE_FIELDS:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name}={v} outside [0,1]")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in COGNITIVE_FIELDS)

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "CognitiveState":
        return cls(*(float(v) for v in values))

    @classmethod
    def uniform(cls, value: float) -> "CognitiveState":
        return cls(*([value] * len(COGNITIVE_FIELDS)))

    def to_dict(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in COGNITIVE_FIELDS}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CognitiveState":
        return cls(**{f: float(d[f]) for f in COGNITIVE_FIELDS})


@dataclass(frozen=True)
class BehaviorRecord:
    slide_index: int
    transcript_index: int
    gaze_aoi: Optional[int]
    motor_aoi: Optional[int]
    cognitive: CognitiveState
    fallback: bool = False

    def validate_against(self, slide: Slide) -> None:
        if self.slide_index != slide.index:
            raise ValidationError(f"record for slide {self.slide_index} checked against slide {slide.index}")
        ids = slide.aoi_ids
        for name in ("gaze_aoi", "motor_aoi"):
            v = getattr(self, name)
            if v is not None and v not in ids:
                raise ValidationError(
                    f"slide {slide.index} transcript {self.transcript_index}: {name}={v} is not an AOI on this slide"
                )

    def to_dict(self) -> dict[str, Any]:
        d = {
            "slide_index": self.slide_index,
            "transcript_index": self.transcript_index,
            "gaze_aoi": self.gaze_aoi,
            "motor_aoi": self.motor_aoi,
            "cognitive": self.cognitive.to_dict(),
        }
        if self.fallback:
            d["fallback"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BehaviorRecord":
        return cls(
            slide_index=int(d["slide_index"]),
            transcript_index=int(d["transcript_index"]),
            gaze_aoi=None if d.get("gaze_aoi") is None else int(d["gaze_aoi"]),
            motor_aoi=None if d.get("motor_aoi") is None else int(d["motor_aoi"]),
            cognitive=CognitiveState.from_dict(d["cognitive"]),
            fallback=bool(d.get("fallback", False)),
        )


@dataclass(frozen=True)
class AnswerRecord:
    question_id: str
    chosen: str
    is_correct: bool
    fallback: bool = False

    @classmethod
    def grade(cls, question: Question, chosen: str, fallback: bool = False) -> "AnswerRecord":
        if chosen not in CHOICE_LABELS:
            raise ValidationError(f"choice {chosen!r} not in A-D")
        return cls(question.id, chosen, chosen == question.correct, fallback)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"question_id": self.question_id, "chosen": self.chosen, "is_correct": self.is_correct}
        if self.fallback:
            d["fallback"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnswerRecord":
        return cls(
            question_id=str(d["question_id"]),
            chosen=str(d["chosen"]),
            is_correct=bool(d["is_correct"]),
            fallback=bool(d.get("fallback", False)),
        )


def map_point_to_aoi(point: Sequence[float], slide: Slide) -> Optional[int]:
    """Return the id of the AOI containing ``point`` or None.

    Overlaps resolve to the smallest-area AOI, then the lowest id. Points
    outside every AOI map to None (off-content gaze), never to the nearest box.
    """
    x, y = float(point[0]), float(point[1])
    hits = [a for a in slide.aois if a.contains(x, y)]
    if not hits:
        return None
    return min(hits, key=lambda a: (a.area, a.id)).id


def aoi_center_distance(a: AOI, b: AOI) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)
