"""Virtual-student persona space: sampling, text rendering and numeric encoding."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields
from typing import Any, Iterator

import numpy as np

# (field, number of categories, rendered item strings by index)
DEMOGRAPHICS: tuple[tuple[str, int, tuple[str, ...]], ...] = (
    ("age", 4, ("18-24", "25-31", "32-38", "> 39")),
    ("gender", 3, ("female", "male", "others")),
    ("major", 6, ("Humanities", "Social", "Natural", "Technology", "Business", "Health")),
    ("education", 4, ("high school", "undergraduate", "master", "doctor")),
)

# (field, heading, negative item, positive item)
CHARACTERISTICS: tuple[tuple[str, str, str, str], ...] = (
    ("attitude", "Learning attitude", "Not motivated", "Very motivated"),
    (
        "exam_performance",
        "Exam performance",
        "Low GPA. make mistakes in post-test",
        "High GPA, answer test questions correctly",
    ),
    ("focus", "Focus", "Usually absent-minded", "Very focus"),
    ("curiosity", "Curiosity", "Not curious at all", "Curious to explore everything in the course"),
    ("interest", "Interest in course", "Not Interested at all", "Super interested"),
    (
        "prior_knowledge",
        "Prior knowledge",
        "No background without priors",
        "Strong background with prior knowledge",
    ),
    ("compliance", "Compliance", "Unwilling to follow teachers", "Well-behaved to follow teachers"),
    ("smartness", "Smartness", "Not smart, understand things slowly", "Smart to understand everything fast"),
    ("family", "Family", "Parents do not care about education", "Parents have a strong academic background"),
)

DEMOGRAPHIC_FIELDS = tuple(d[0] for d in DEMOGRAPHICS)
CHARACTERISTIC_FIELDS = tuple(c[0] for c in CHARACTERISTICS)
PERSONA_FIELDS = DEMOGRAPHIC_FIELDS + CHARACTERISTIC_FIELDS
_DEMOGRAPHIC_HEADINGS = {"age": "Age", "gender": "Gender", "major": "Major", "education": "Education level"}
_RADICES = tuple(d[1] for d in DEMOGRAPHICS) + (2,) * len(CHARACTERISTICS)


@dataclass(frozen=True)
class PersonaProfile:
    age: int
    gender: int
    major: int
    education: int
    attitude: int
    exam_performance: int
    focus: int
    curiosity: int
    interest: int
    prior_knowledge: int
    compliance: int
    smartness: int
    family: int

    def __post_init__(self) -> None:
        for name, radix in zip(PERSONA_FIELDS, _RADICES):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or not 0 <= v < radix:
                raise ValueError(f"persona field {name}={v!r} outside 0..{radix - 1}")
            object.__setattr__(self, name, int(v))

    def to_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PersonaProfile":
        missing = [f for f in PERSONA_FIELDS if f not in d]
        if missing:
            raise ValueError(f"persona missing fields {missing}")
        return cls(**{f: d[f] for f in PERSONA_FIELDS})

    @classmethod
    def from_index(cls, index: int) -> "PersonaProfile":
        """Decode a mixed-radix index in ``[0, persona_space_size())``."""
        if not 0 <= index < persona_space_size():
            raise ValueError(f"persona index {index} out of range")
        values = []
        for radix in reversed(_RADICES):
            index, digit = divmod(index, radix)
            values.append(digit)
        return cls(*reversed(values))


@dataclass(frozen=True)
class PersonaEncoding:
    items: dict[str, float]
    aggregate: float


def persona_space_size(fixed: tuple[str, ...] = ()) -> int:
    """Number of distinct personas, optionally with some fields held fixed."""
    unknown = set(fixed) - set(PERSONA_FIELDS)
    if unknown:
        raise ValueError(f"unknown persona fields {sorted(unknown)}")
    return math.prod(r for name, r in zip(PERSONA_FIELDS, _RADICES) if name not in fixed)


def iter_personas(fixed: dict[str, int] | None = None) -> Iterator[PersonaProfile]:
    """Enumerate every persona consistent with ``fixed`` field values."""
    fixed = fixed or {}
    axes = [(fixed[n],) if n in fixed else range(r) for n, r in zip(PERSONA_FIELDS, _RADICES)]
    for combo in itertools.product(*axes):
        yield PersonaProfile(*combo)


def sample_persona(seed: int) -> PersonaProfile:
    """Draw one persona uniformly from the whole space, reproducibly for ``seed``."""
    rng = np.random.default_rng(seed)
    return PersonaProfile.from_index(int(rng.integers(persona_space_size())))


def encode_persona(p: PersonaProfile) -> PersonaEncoding:
    # categorical index i of max index M encodes to i / M; binaries pass through
    items: dict[str, float] = {}
    for name, n_cat, _ in DEMOGRAPHICS:
        items[name] = getattr(p, name) / (n_cat - 1)
    for name in CHARACTERISTIC_FIELDS:
        items[name] = float(getattr(p, name))
    return PersonaEncoding(items=items, aggregate=sum(items.values()) / len(items))


def render_persona_text(p: PersonaProfile) -> str:
    lines = []
    for name, _, labels in DEMOGRAPHICS:
        lines.append(f"{_DEMOGRAPHIC_HEADINGS[name]}: {labels[getattr(p, name)]}")
    for name, heading, neg, pos in CHARACTERISTICS:
        lines.append(f"{heading}: {pos if getattr(p, name) else neg}")
    return "\n".join(lines)
