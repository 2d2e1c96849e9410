"""Synthetic lectures and recordings for demos and hermetic tests.

Nothing here stands in for real data in an analysis; it only exercises the
file formats and pipelines end to end.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .dataset import RawSecondSample, StudentRecord, record_from_raw
from .model import AOI, AnswerRecord, CHOICE_LABELS, Lecture, Question, Slide, Transcript
from .persona import PersonaProfile, sample_persona


def make_lecture(
    n_slides: int = 4,
    n_aois: int = 4,
    n_transcripts: int = 3,
    seconds_per_transcript: int = 6,
    questions_per_slide: int = 1,
    seed: int = 0,
) -> Lecture:
    """Lecture with AOIs laid out as horizontal bands and marker-tagged text.

    Transcript text carries an ``S{slide}T{index}`` marker so tests can
    detect which slide's material reached a prompt.
    """
    rng = np.random.default_rng(seed)
    slides = []
    clock = 0
    band = 1.0 / n_aois
    for s in range(1, n_slides + 1):
        aois = tuple(
            AOI(i, (0.05, round((i - 1) * band, 6), 0.95, round(i * band, 6)), f"block {i} of slide {s}")
            for i in range(1, n_aois + 1)
        )
        transcripts = []
        for t in range(1, n_transcripts + 1):
            transcripts.append(
                Transcript(
                    t,
                    f"S{s}T{t} sentence about topic {s}.{t}.",
                    int(rng.integers(1, n_aois + 1)),
                    (clock, clock + seconds_per_transcript),
                )
            )
            clock += seconds_per_transcript
        questions = tuple(
            Question(
                f"q{s}_{j}",
                f"Question {j} about slide {s}?",
                {c: f"option {c}" for c in CHOICE_LABELS},
                str(rng.choice(CHOICE_LABELS)),
                s,
            )
            for j in range(1, questions_per_slide + 1)
        )
        slides.append(Slide(s, aois, tuple(transcripts), questions))
    lecture = Lecture(tuple(slides))
    lecture.validate()
    return lecture


def _point_in(aoi: AOI, rng: np.random.Generator) -> tuple[float, float]:
    x0, y0, x1, y1 = aoi.bbox
    # keep clear of band edges so the point maps to exactly this AOI
    return (
        round(float(rng.uniform(x0 + 0.1 * (x1 - x0), x1 - 0.1 * (x1 - x0))), 4),
        round(float(rng.uniform(y0 + 0.1 * (y1 - y0), y1 - 0.1 * (y1 - y0))), 4),
    )


def make_raw_samples(lecture: Lecture, seed: int, attentiveness: float = 0.6) -> list[RawSecondSample]:
    rng = np.random.default_rng(seed)
    samples = []
    for slide in lecture.slides:
        for t in slide.transcripts:
            assert t.window is not None
            for sec in range(*t.window):
                if rng.random() < 0.08:
                    gaze = None
                elif rng.random() < attentiveness:
                    gaze = _point_in(slide.aoi(t.pace_aoi), rng)
                elif rng.random() < 0.1:
                    gaze = (0.01, 0.01)
                else:
                    gaze = _point_in(slide.aois[int(rng.integers(len(slide.aois)))], rng)
                mouse = gaze if gaze is not None and rng.random() < 0.5 else _point_in(
                    slide.aois[int(rng.integers(len(slide.aois)))], rng
                )
                samples.append(
                    RawSecondSample(
                        sec,
                        gaze,
                        mouse,
                        face_detected=bool(rng.random() < 0.9),
                        confusion_click=bool(rng.random() < 0.05),
                    )
                )
    return samples


def make_real_records(
    lecture: Lecture, n_students: int, seed: int = 0, with_persona: bool = True
) -> tuple[list[StudentRecord], dict[str, list[RawSecondSample]]]:
    """Students with raw recordings, reduced to per-transcript records."""
    rng = np.random.default_rng(seed)
    records = []
    raw = {}
    for i in range(n_students):
        sid = f"real-{i:04d}"
        persona: Optional[PersonaProfile] = sample_persona(seed * 1000 + i) if with_persona else None
        samples = make_raw_samples(lecture, seed * 1000 + i, attentiveness=float(rng.uniform(0.3, 0.9)))
        answers = [AnswerRecord.grade(q, str(rng.choice(CHOICE_LABELS))) for q in lecture.questions]
        records.append(record_from_raw(lecture, sid, samples, persona, answers))
        raw[sid] = samples
    return records, raw
