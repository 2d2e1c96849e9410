import json
import re

import pytest

from studentsim.agent import (
    MemoryStore,
    SimulationConfig,
    build_prompt,
    run_experiment1,
    run_experiment2,
)
from studentsim.agent.engine import AgentState, run_slide_step
from studentsim.agent.prompts import format_cognitive, prior_statements
from studentsim.llm import MockPolicy, MockProvider
from studentsim.model import CognitiveState
from studentsim.persona import render_persona_text, sample_persona
from studentsim.synthetic import make_lecture

PERSONA = sample_persona(3)


def _memory(lecture, slide_index=1, gaze=2, motor=3, value=0.25):
    s = lecture.slide(slide_index)
    n = len(s.transcripts)
    return MemoryStore(
        render_persona_text(PERSONA), s, (gaze,) * n, (motor,) * n, (CognitiveState.uniform(value),) * n
    )


def _lines(text):
    return set(text.splitlines())


def _demo_lines(prompt, layer):
    return [ln for ln in prompt.splitlines() if re.match(rf"T\d+ {layer}", ln)]


# --- prompt assembly --------------------------------------------------------


def test_block_order_cognitive(lecture):
    text = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig()).user_text
    order = ["[PERSONA]", "[CURRENT SLIDE]", "[DEMONSTRATION]", "[PRIORS]", "[REFLECT FIRST]", "[OUTPUT SCHEMA]"]
    positions = [text.index(b) for b in order]
    assert positions == sorted(positions)
    assert "[TASK]" not in text


def test_cognitive_mode_lists_every_prior(lecture):
    text = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig()).user_text
    priors = prior_statements()
    assert len(priors) == 6
    for p in priors:
        assert p in text


def test_standard_mode_has_no_priors(lecture):
    cfg = SimulationConfig(prior_mode="standard")
    text = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), cfg).user_text
    assert "[PRIORS]" not in text and "[REFLECT FIRST]" not in text
    assert not any(p in text for p in prior_statements())
    assert "[TASK]" in text


def test_drop_demonstration(lecture):
    cfg = SimulationConfig.with_ablation("D")
    text = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), cfg).user_text
    assert "[DEMONSTRATION]" not in text
    assert "[PRIORS]" in text


def test_drop_motor_keeps_other_layers(lecture):
    full = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig()).user_text
    xm = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig.with_ablation("M")).user_text
    n = len(lecture.slide(1).transcripts)
    assert len(_demo_lines(xm, "gaze")) == n
    assert len(_demo_lines(xm, "cognitive")) == n
    assert _demo_lines(xm, "motor") == []
    # ablation only removes lines
    assert _lines(xm) <= _lines(full)
    assert _lines(full) - _lines(xm) == set(_demo_lines(full, "motor"))


@pytest.mark.parametrize("ablation, layer", [("P", "gaze"), ("C", "cognitive")])
def test_other_single_layer_ablations(lecture, ablation, layer):
    full = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig()).user_text
    cut = build_prompt(PERSONA, lecture.slide(2), _memory(lecture), SimulationConfig.with_ablation(ablation)).user_text
    assert _lines(full) - _lines(cut) == set(_demo_lines(full, layer))


def test_first_slide_has_no_demonstration(lecture):
    memory = MemoryStore.empty(render_persona_text(PERSONA))
    text = build_prompt(PERSONA, lecture.slide(1), memory, SimulationConfig()).user_text
    assert "[DEMONSTRATION]" not in text
    assert "[PRIORS]" in text


def test_demonstration_values(lecture):
    text = build_prompt(PERSONA, lecture.slide(2), _memory(lecture, gaze=4, motor=1), SimulationConfig()).user_text
    assert "T1 gaze AOI: 4" in text
    assert "T1 motor AOI: 1" in text
    assert "T1 cognitive states: " + format_cognitive(CognitiveState.uniform(0.25)) in text


def test_ablation_labels():
    assert SimulationConfig().ablation_label == "All"
    assert SimulationConfig.with_ablation("P").ablation_label == "xP"
    with pytest.raises(ValueError):
        SimulationConfig.with_ablation("Q")


# --- single step ------------------------------------------------------------


def _agent(lecture, memory=None):
    return AgentState(0, "a", PERSONA, 0, memory or MemoryStore.empty(render_persona_text(PERSONA)))


def _scripted(body):
    return MockProvider(MockPolicy(script=lambda req: json.dumps(body)))


def _step_body(slide, gaze, choice="B"):
    return {
        "reasoning": "r",
        "transcripts": [
            {"index": t.index, "gaze_aoi": gaze, "motor_aoi": gaze, **CognitiveState.uniform(0.3).to_dict()}
            for t in slide.transcripts
        ],
        "answers": [{"question_id": q.id, "choice": choice} for q in slide.questions],
    }


def test_scripted_step(lecture):
    slide = lecture.slide(1)
    out = run_slide_step(_agent(lecture), slide, SimulationConfig(), _scripted(_step_body(slide, 2)))
    assert [b.gaze_aoi for b in out.behaviors] == [2, 2, 2]
    assert not out.fallback and out.parse_attempts == 1


def test_correct_choice_is_graded(lecture):
    slide = lecture.slide(1)
    q = slide.questions[0]
    out = run_slide_step(_agent(lecture), slide, SimulationConfig(), _scripted(_step_body(slide, 1, q.correct)))
    assert out.answers[0].is_correct and out.answers[0].chosen == q.correct


def test_fallback_after_three_bad_replies(lecture):
    slide = lecture.slide(2)
    provider = MockProvider(MockPolicy(script=lambda req: '{"reasoning": "x"}'))
    memory = _memory(lecture, value=0.25)
    out = run_slide_step(_agent(lecture, memory), slide, SimulationConfig(), provider)
    assert provider.calls == 3 and out.parse_attempts == 3
    assert out.fallback
    assert len(out.behaviors) == len(slide.transcripts)
    for b, t in zip(out.behaviors, slide.transcripts):
        assert b.fallback and b.gaze_aoi == b.motor_aoi == t.pace_aoi
        assert b.cognitive == CognitiveState.uniform(0.25)
    assert all(a.chosen == "A" and a.fallback for a in out.answers)
    # re-prompts carry the reason
    assert "[CORRECTION]" in out.exchanges[1]["prompt"]


def test_fallback_on_first_slide_uses_half(lecture):
    provider = MockProvider(MockPolicy(script=lambda req: "nothing"))
    out = run_slide_step(_agent(lecture), lecture.slide(1), SimulationConfig(), provider)
    assert all(b.cognitive == CognitiveState.uniform(0.5) for b in out.behaviors)


def test_wrong_transcript_count_is_reprompted(lecture):
    slide = lecture.slide(1)
    good = _step_body(slide, 1)
    short = dict(good, transcripts=good["transcripts"][:1])
    replies = iter([json.dumps(short), json.dumps(good)])
    provider = MockProvider(MockPolicy(script=lambda req: next(replies)))
    out = run_slide_step(_agent(lecture), slide, SimulationConfig(), provider)
    assert out.parse_attempts == 2 and not out.fallback
    assert "expected 3 transcript entries" in out.exchanges[1]["prompt"]


# --- experiment drivers -----------------------------------------------------


def _prompt_for(run, slide_index):
    return [e["prompt"] for e in run.exchanges if e["slide_index"] == slide_index][0]


def test_experiment1_memory_is_real_previous_slide(lecture, real_cohort):
    records = real_cohort[0]
    runs = run_experiment1(lecture, records, SimulationConfig(), MockProvider(), workers=2)
    for run, rec in zip(runs, records):
        assert run.ok and run.student_id == rec.student_id
        assert "[DEMONSTRATION]" not in _prompt_for(run, 1)
        for k in range(2, len(lecture.slides) + 1):
            prompt = _prompt_for(run, k)
            for b in rec.slide_behaviors(k - 1):
                assert f"T{b.transcript_index} cognitive states: {format_cognitive(b.cognitive)}" in prompt
            assert f"S{k - 1}T1" in prompt
            for older in range(1, k - 1):
                assert f"S{older}T" not in prompt


def test_experiment2_memory_is_own_output(lecture):
    runs = run_experiment2(lecture, 3, SimulationConfig(seed=4), MockProvider(), workers=3)
    for run in runs:
        assert run.ok
        for k in range(2, len(lecture.slides) + 1):
            prompt = _prompt_for(run, k)
            for b in run.steps[k - 2].behaviors:
                assert f"T{b.transcript_index} gaze AOI: {b.gaze_aoi}" in prompt
                assert f"T{b.transcript_index} cognitive states: {format_cognitive(b.cognitive)}" in prompt
            for older in range(1, k - 1):
                assert f"S{older}T" not in prompt


def test_experiment2_is_deterministic(lecture):
    a = run_experiment2(lecture, 4, SimulationConfig(seed=9), MockProvider(), workers=4)
    b = run_experiment2(lecture, 4, SimulationConfig(seed=9), MockProvider(), workers=1)
    assert [r.record for r in a] == [r.record for r in b]


def test_agent_prefix_is_stable_across_cohort_sizes(lecture):
    small = run_experiment2(lecture, 2, SimulationConfig(seed=1), MockProvider())
    big = run_experiment2(lecture, 5, SimulationConfig(seed=1), MockProvider())
    assert [r.record for r in small] == [r.record for r in big[:2]]


def test_one_record_per_transcript(lecture):
    policy = MockPolicy(malformed_agents=frozenset({1}))
    runs = run_experiment2(lecture, 3, SimulationConfig(), MockProvider(policy))
    n = sum(len(s.transcripts) for s in lecture.slides)
    for run in runs:
        assert len(run.record.behaviors) == n
        run.record.validate_against(lecture)
    assert all(b.fallback for b in runs[1].record.behaviors)
    assert runs[1].accounting()["fallback_slides"] == [1, 2, 3, 4]


def test_failing_agent_is_isolated(lecture):
    policy = MockPolicy(fail_agents=frozenset({2}))
    runs = run_experiment2(lecture, 4, SimulationConfig(), MockProvider(policy))
    assert [r.ok for r in runs] == [True, True, False, True]
    assert "slide 1" in runs[2].error
    assert runs[2].accounting()["provider_attempts"] == 0


def test_mock_answers_reflect_persona():
    lec = make_lecture(n_slides=6, questions_per_slide=3, seed=2)
    runs = run_experiment2(lec, 40, SimulationConfig(), MockProvider())
    acc = [sum(a.is_correct for a in r.record.answers) / len(r.record.answers) for r in runs]
    assert 0.2 < sum(acc) / len(acc) < 0.9
