import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from studentsim.persona import (
    CHARACTERISTIC_FIELDS,
    PERSONA_FIELDS,
    PersonaProfile,
    encode_persona,
    iter_personas,
    persona_space_size,
    render_persona_text,
    sample_persona,
)

ALL_ZERO = PersonaProfile(*([0] * 13))
ALL_MAX = PersonaProfile(3, 2, 5, 3, *([1] * 9))


def test_space_size():
    assert persona_space_size() == 147456
    assert persona_space_size(fixed=("age",)) == 36864
    assert persona_space_size(fixed=("age", "gender", "major", "education")) == 512


def test_sampling_is_deterministic():
    assert sample_persona(123) == sample_persona(123)


def test_sampling_marginals():
    draws = [sample_persona(s) for s in range(10_000)]
    for name in CHARACTERISTIC_FIELDS:
        mean = np.mean([getattr(p, name) for p in draws])
        assert 0.47 <= mean <= 0.53, name
    assert {p.age for p in draws} == {0, 1, 2, 3}


def test_from_index_is_a_bijection_on_a_slice():
    seen = {PersonaProfile.from_index(i) for i in range(0, persona_space_size(), 97)}
    assert len(seen) == len(range(0, persona_space_size(), 97))


def test_encode_extremes():
    assert encode_persona(ALL_ZERO).aggregate == 0.0
    assert encode_persona(ALL_MAX).aggregate == 1.0


def test_encode_hand_example():
    p = PersonaProfile(2, 1, 3, 2, 1, 1, 1, 1, 1, 0, 0, 0, 0)
    enc = encode_persona(p)
    assert enc.items["age"] == pytest.approx(2 / 3)
    assert enc.items["gender"] == 0.5
    assert enc.items["major"] == pytest.approx(0.6)
    # (2/3 + 0.5 + 0.6 + 2/3 + 5) / 13
    assert enc.aggregate == pytest.approx(0.5717948717948718, abs=1e-12)


@given(st.integers(0, persona_space_size() - 1))
def test_encoding_aggregate_is_item_mean(idx):
    enc = encode_persona(PersonaProfile.from_index(idx))
    assert 0.0 <= enc.aggregate <= 1.0
    assert enc.aggregate == pytest.approx(sum(enc.items.values()) / 13)


def test_render_uses_table_phrases():
    p = PersonaProfile(0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0)
    text = render_persona_text(p)
    assert "Smart to understand everything fast" in text
    assert "Low GPA" in text
    assert len(text.splitlines()) == 13


@settings(max_examples=200)
@given(st.integers(0, persona_space_size() - 1), st.integers(0, persona_space_size() - 1))
def test_render_is_injective(i, j):
    a, b = PersonaProfile.from_index(i), PersonaProfile.from_index(j)
    assert (render_persona_text(a) == render_persona_text(b)) == (a == b)


def test_no_out_of_range_categories_in_many_draws():
    rng = np.random.default_rng(0)
    for seed in rng.integers(0, 2**62, size=100_000):
        sample_persona(int(seed))  # constructor validates ranges


def test_enumeration_of_binaries():
    fixed = {"age": 0, "gender": 0, "major": 0, "education": 0}
    assert len(set(iter_personas(fixed))) == 512


def test_invalid_category_rejected():
    with pytest.raises(ValueError):
        PersonaProfile(4, 0, 0, 0, *([0] * 9))


def test_dict_round_trip():
    p = sample_persona(9)
    assert PersonaProfile.from_dict(p.to_dict()) == p
    assert list(p.to_dict()) == list(PERSONA_FIELDS)
