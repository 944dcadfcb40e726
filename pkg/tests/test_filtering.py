from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from uavtraj.errors import FormatError
from uavtraj.filtering import PromptManifest, ScoreRecord, aggregate_clip, run_filter, score_frame
from uavtraj.sim import filter_fixture

M = PromptManifest.default()


def rec(pos, neg, sta=0.6, dyn=0.4, clip="c", frame=0):
    return ScoreRecord(clip, frame, {"drone_sky": pos, "no_drone": neg, "static_view": sta, "dynamic_view": dyn})


def test_frame_retained_on_positive_margin():
    v = score_frame(rec(0.8, 0.4), M)
    assert v.retained and v.top_prompt == "drone_sky"
    assert v.margin == pytest.approx(0.4)


def test_frame_dropped_on_small_margin_or_negative_top():
    assert not score_frame(rec(0.5, 0.3), M).retained
    assert not score_frame(rec(0.3, 0.8), M).retained
    # a tie counts as negative alignment
    assert not score_frame(rec(0.5, 0.5), M, tau=0.0).retained
    # margin exactly at tau is kept
    assert score_frame(rec(0.75, 0.25), M, tau=0.5).retained


def test_missing_prompt_names_it():
    bad = ScoreRecord("c", 3, {"drone_sky": 0.9})
    with pytest.raises(FormatError, match="no_drone"):
        score_frame(bad, M)


def test_clip_all_retained_accepted():
    frames = [score_frame(rec(0.8, 0.3, frame=i), M) for i in range(5)]
    v = aggregate_clip(frames)
    assert v.accepted and v.static_confidence == 1.0
    assert v.video_relevance == pytest.approx(0.8)


def test_clip_without_retained_frames_rejected():
    v = aggregate_clip([score_frame(rec(0.3, 0.8, frame=i), M) for i in range(5)])
    assert v.decision == "reject" and v.retained_frames == 0 and not v.passes_visibility


def test_dynamic_clip_rejected():
    v = run_filter([rec(0.85, 0.3, 0.4, 0.6, frame=i) for i in range(4)])[0]
    assert v.passes_visibility and not v.accepted


def test_multiple_prompts_per_role():
    prompts = {
        "a": {"text": "", "role": "pos_vis"}, "b": {"text": "", "role": "pos_vis"},
        "n": {"text": "", "role": "neg_vis"},
        "s1": {"text": "", "role": "static"}, "s2": {"text": "", "role": "static"},
        "d": {"text": "", "role": "dynamic"},
    }
    m = PromptManifest(prompts)
    v = score_frame(ScoreRecord("c", 0, {"a": 0.2, "b": 0.9, "n": 0.4, "s1": 0.1, "s2": 0.7, "d": 0.5}), m)
    assert v.top_prompt == "b" and v.static_score == 0.7 and v.retained


def test_manifest_validation():
    with pytest.raises(FormatError):
        PromptManifest({"x": {"text": "", "role": "weird"}})
    with pytest.raises(FormatError, match="static"):
        PromptManifest({"x": {"text": "", "role": "pos_vis"}, "d": {"text": "", "role": "dynamic"}})


def test_pluggable_decision():
    records = [rec(0.3, 0.8, clip="a"), rec(0.9, 0.2, clip="b")]
    out = run_filter(records, decide=lambda v: "accept")
    assert [v.clip_id for v in out] == ["a", "b"]
    assert all(v.accepted for v in out)


def test_output_sorted_by_clip():
    records = [rec(0.8, 0.3, clip=c) for c in ("z", "a", "m")]
    assert [v.clip_id for v in run_filter(records)] == ["a", "m", "z"]


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-0.5, 0.5))
def test_margin_invariant_to_shift(pos, neg, shift):
    a = score_frame(rec(pos, neg), M)
    b = score_frame(rec(pos + shift, neg + shift), M)
    assert b.margin == pytest.approx(a.margin, abs=1e-12)


def test_fixture_groups_behave():
    records, groups = filter_fixture(n_good=4, n_dynamic=4, n_invisible=8)
    for v in run_filter(records):
        g = groups[v.clip_id]
        assert v.passes_visibility == (g != "invisible")
        assert v.accepted == (g == "good")
