"""Replay-fidelity metrics, behaviour encoders and cohort correlation analysis."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import StudentRecord, entropy_bits
from .model import COGNITIVE_FIELDS, AnswerRecord, BehaviorRecord, Lecture, aoi_center_distance
from .persona import CHARACTERISTIC_FIELDS, DEMOGRAPHIC_FIELDS, encode_persona

NONE_PENALTY = 0.5

SUMMARY_FIELDS = (
    "gaze_entropy",
    "motor_entropy",
    "gaze_following",
    "motor_following",
    "gaze_fixing",
    "motor_fixing",
    *COGNITIVE_FIELDS,
    "question_accuracy",
)


def _check_aligned(agent: Sequence[BehaviorRecord], truth: Sequence[BehaviorRecord]) -> None:
    if len(agent) != len(truth):
        raise ValueError(f"streams differ in length: {len(agent)} vs {len(truth)}")
    for a, t in zip(agent, truth):
        if (a.slide_index, a.transcript_index) != (t.slide_index, t.transcript_index):
            raise ValueError(
                f"streams misaligned at slide {a.slide_index}/T{a.transcript_index} "
                f"vs slide {t.slide_index}/T{t.transcript_index}"
            )


def gaze_motor_distance(
    agent: Sequence[BehaviorRecord],
    truth: Sequence[BehaviorRecord],
    lecture: Lecture,
    penalty: float = NONE_PENALTY,
) -> tuple[float, float]:
    """Mean AOI-centre distance for gaze and for motor over aligned streams.

    A transcript where either side has no AOI contributes ``penalty``.
    """
    _check_aligned(agent, truth)
    if not agent:
        raise ValueError("empty streams")
    totals = [0.0, 0.0]
    for a, t in zip(agent, truth):
        slide = lecture.slide(a.slide_index)
        for k, (x, y) in enumerate(((a.gaze_aoi, t.gaze_aoi), (a.motor_aoi, t.motor_aoi))):
            totals[k] += penalty if x is None or y is None else aoi_center_distance(slide.aoi(x), slide.aoi(y))
    n = len(agent)
    return totals[0] / n, totals[1] / n


def cognitive_mae(agent: Sequence[BehaviorRecord], truth: Sequence[BehaviorRecord]) -> dict[str, float]:
    """Per-state mean absolute error plus ``overall`` (mean of the six)."""
    _check_aligned(agent, truth)
    if not agent:
        raise ValueError("empty streams")
    a = np.array([b.cognitive.as_tuple() for b in agent], dtype=float)
    t = np.array([b.cognitive.as_tuple() for b in truth], dtype=float)
    per = np.abs(a - t).mean(axis=0)
    out = {name: float(v) for name, v in zip(COGNITIVE_FIELDS, per)}
    out["overall"] = float(per.mean())
    return out


def _same_question(agent: AnswerRecord, truth: AnswerRecord) -> None:
    if agent.question_id != truth.question_id:
        raise ValueError(f"question mismatch: {agent.question_id} vs {truth.question_id}")


def choice_similarity(agent: AnswerRecord, truth: AnswerRecord) -> int:
    _same_question(agent, truth)
    return int(agent.chosen == truth.chosen)


def accuracy_similarity(agent: AnswerRecord, truth: AnswerRecord) -> int:
    _same_question(agent, truth)
    return int(agent.is_correct == truth.is_correct)


def sequence_entropy(aoi_sequence: Sequence[Optional[int]]) -> float:
    """Entropy in bits of the AOI-id histogram, ignoring None entries."""
    return entropy_bits(Counter(a for a in aoi_sequence if a is not None).values())


def following_rate(aoi_sequence: Sequence[Optional[int]], pace_sequence: Sequence[int]) -> float:
    if len(aoi_sequence) != len(pace_sequence):
        raise ValueError("sequence and pace differ in length")
    if not aoi_sequence:
        raise ValueError("empty sequence")
    hits = sum(a is not None and a == p for a, p in zip(aoi_sequence, pace_sequence))
    return hits / len(aoi_sequence)


def fixing_rate(aoi_sequence: Sequence[Optional[int]]) -> float:
    """Share of transcripts 2..n whose AOI equals the previous one (None never matches)."""
    if len(aoi_sequence) < 2:
        raise ValueError("fixing rate needs at least two transcripts")
    pairs = list(zip(aoi_sequence, aoi_sequence[1:]))
    return sum(a is not None and a == b for a, b in pairs) / len(pairs)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson r; NaN when either input is constant."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("pearson needs two 1-D vectors of equal length")
    if len(xa) < 2:
        raise ValueError("pearson needs at least two observations")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if np.ptp(xa) == 0 or np.ptp(ya) == 0 or sxx == 0 or syy == 0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class ReplayScores:
    gaze_aoi_distance: float
    motor_aoi_distance: float
    cognitive_mae: dict[str, float]
    choice_similarity: float
    accuracy_similarity: float

    def as_rows(self) -> list[tuple[str, float]]:
        rows = [("gaze_aoi_distance", self.gaze_aoi_distance), ("motor_aoi_distance", self.motor_aoi_distance)]
        rows += [(f"mae_{k}", v) for k, v in self.cognitive_mae.items()]
        rows += [("choice_similarity", self.choice_similarity), ("accuracy_similarity", self.accuracy_similarity)]
        return rows


def replay_scores(agent: StudentRecord, truth: StudentRecord, lecture: Lecture) -> ReplayScores:
    key = lambda b: (b.slide_index, b.transcript_index)  # noqa: E731
    a_beh = sorted(agent.behaviors, key=key)
    t_beh = sorted(truth.behaviors, key=key)
    gaze, motor = gaze_motor_distance(a_beh, t_beh, lecture)
    truth_answers = {a.question_id: a for a in truth.answers}
    pairs = [(a, truth_answers[a.question_id]) for a in agent.answers if a.question_id in truth_answers]
    if pairs:
        ch = sum(choice_similarity(a, t) for a, t in pairs) / len(pairs)
        ac = sum(accuracy_similarity(a, t) for a, t in pairs) / len(pairs)
    else:
        ch = ac = math.nan
    return ReplayScores(gaze, motor, cognitive_mae(a_beh, t_beh), ch, ac)


def _nanmean(values: Sequence[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def slide_summary(record: StudentRecord, lecture: Lecture, slide_index: int) -> dict[str, float]:
    """Behaviour measures for one simulation step (slide), averaged over its transcripts."""
    slide = lecture.slide(slide_index)
    recs = sorted(record.slide_behaviors(slide_index), key=lambda b: b.transcript_index)
    gaze = [b.gaze_aoi for b in recs]
    motor = [b.motor_aoi for b in recs]
    pace = slide.pace_sequence
    out = {
        "gaze_entropy": sequence_entropy(gaze),
        "motor_entropy": sequence_entropy(motor),
        "gaze_following": following_rate(gaze, pace),
        "motor_following": following_rate(motor, pace),
        "gaze_fixing": fixing_rate(gaze) if len(gaze) >= 2 else math.nan,
        "motor_fixing": fixing_rate(motor) if len(motor) >= 2 else math.nan,
    }
    for i, name in enumerate(COGNITIVE_FIELDS):
        out[name] = sum(b.cognitive.as_tuple()[i] for b in recs) / len(recs)
    answers = record.slide_answers(slide)
    out["question_accuracy"] = sum(a.is_correct for a in answers) / len(answers) if answers else math.nan
    return out


def behavior_summary(record: StudentRecord, lecture: Lecture) -> dict[str, float]:
    """Per-student measures: the mean of per-slide values (slides where a value is undefined are skipped)."""
    per_slide = [slide_summary(record, lecture, s.index) for s in lecture.slides]
    return {k: _nanmean([row[k] for row in per_slide]) for k in SUMMARY_FIELDS}


@dataclass(frozen=True)
class CorrelationMatrix:
    labels: tuple[str, ...]
    values: np.ndarray

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


def persona_columns(include_gender: bool = False) -> list[str]:
    demo = [d for d in DEMOGRAPHIC_FIELDS if include_gender or d != "gender"]
    return [f"persona_{n}" for n in demo + list(CHARACTERISTIC_FIELDS)] + ["persona_aggregate"]


def cohort_table(
    cohort: Sequence[StudentRecord], lecture: Lecture, include_gender: bool = False
) -> tuple[list[str], np.ndarray]:
    """Stack encoded personas and behaviour summaries, one row per student (sorted by id)."""
    cols = persona_columns(include_gender) + list(SUMMARY_FIELDS)
    rows = []
    for rec in sorted(cohort, key=lambda r: r.student_id):
        if rec.persona is None:
            raise ValueError(f"student {rec.student_id} has no persona")
        enc = encode_persona(rec.persona)
        summary = behavior_summary(rec, lecture)
        row = [enc.items[c[len("persona_"):]] for c in cols if c.startswith("persona_") and c != "persona_aggregate"]
        row.append(enc.aggregate)
        row += [summary[k] for k in SUMMARY_FIELDS]
        rows.append(row)
    return cols, np.array(rows, dtype=float).reshape(len(rows), len(cols))


def correlation_matrix(
    cohort: Sequence[StudentRecord], lecture: Lecture, include_gender: bool = False
) -> CorrelationMatrix:
    """Pairwise Pearson r over persona encodings and per-student behaviour summaries.

    Entries involving a constant (or partly undefined) column are NaN.
    """
    if len(cohort) < 2:
        raise ValueError("correlation needs at least two students")
    cols, table = cohort_table(cohort, lecture, include_gender)
    k = len(cols)
    values = np.full((k, k), math.nan)
    for i in range(k):
        for j in range(i, k):
            x, y = table[:, i], table[:, j]
            if np.isnan(x).any() or np.isnan(y).any():
                continue
            r = pearson(x, y)
            if i == j and not math.isnan(r):
                r = 1.0
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(tuple(cols), values)


def _fmt(v: float) -> str:
    return "NA" if math.isnan(v) else repr(float(v))


def write_correlation_csv(matrix: CorrelationMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["", *matrix.labels])
        for label, row in zip(matrix.labels, matrix.values):
            w.writerow([label, *(_fmt(v) for v in row)])


def read_correlation_csv(path: str | Path) -> CorrelationMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    labels = tuple(rows[0][1:])
    values = np.array([[math.nan if v == "NA" else float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    return CorrelationMatrix(labels, values)


def write_summary_csv(cohort: Sequence[StudentRecord], lecture: Lecture, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", *SUMMARY_FIELDS])
        for rec in sorted(cohort, key=lambda r: r.student_id):
            s = behavior_summary(rec, lecture)
            w.writerow([rec.student_id, *(_fmt(s[k]) for k in SUMMARY_FIELDS)])


def write_scores_csv(scores: dict[str, ReplayScores], path: str | Path) -> dict[str, float]:
    """Write one row per (agent, metric) plus cohort means under agent ``ALL``; return the means."""
    means: dict[str, list[float]] = {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["agent", "metric", "value"])
        for sid in sorted(scores):
            for metric, v in scores[sid].as_rows():
                w.writerow([sid, metric, _fmt(v)])
                means.setdefault(metric, []).append(v)
        cohort_means = {m: _nanmean(vs) for m, vs in means.items()}
        for metric, v in cohort_means.items():
            w.writerow(["ALL", metric, _fmt(v)])
    return cohort_means
