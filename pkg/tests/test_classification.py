from __future__ import annotations

import numpy as np
import pytest

from oracles import vote_oracle
from uavtraj.classification import (
    ClipLabel,
    FrameLabel,
    accuracy,
    dominant_label,
    lookup_size_prior,
    segment_clips,
    size_prior_table,
    vote_clip,
)
from uavtraj.errors import ConfigError, UsageError


def labels(seq, conf=0.8, start=0):
    return [FrameLabel(start + i, lab, conf) for i, lab in enumerate(seq)]


def test_three_of_five_uncertain():
    out = vote_clip(labels("AAABB"), 5, 0.9)
    assert out.label == "A" and out.status == "uncertain"
    assert out.agreement == pytest.approx(0.6)


def test_unanimous_window_confirmed_and_boosted():
    out = vote_clip(labels("AAAAA", conf=0.5), 5, 0.9)
    assert out.confirmed
    assert out.confidence == 1.0  # max(mean 0.5, agreement 1.0)


def test_confirmed_keeps_higher_mean_confidence():
    seq = [FrameLabel(i, "A", 0.95) for i in range(5)]
    out = vote_clip(seq)
    # agreement = 1.0 wins over 0.95
    assert out.confidence == 1.0
    seq = [FrameLabel(i, "A", 0.95) for i in range(10)]
    out = vote_clip(seq, N=5, rho=0.8)
    assert out.confidence == 1.0


def test_dominant_tie_goes_to_lowest():
    assert dominant_label(labels("BBAA")) == "A"


def test_short_sequence_never_confirmed():
    assert vote_clip(labels("AAA")).status == "uncertain"


def test_empty_rejected():
    with pytest.raises(UsageError):
        vote_clip([])


def test_unsorted_input_is_ordered_by_frame():
    seq = labels("BAAAAA")
    assert vote_clip(list(reversed(seq))) == vote_clip(seq)


def test_matches_oracle_on_random_sequences():
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(500):
        n = int(rng.integers(1, 21))
        seq = [str(c) for c in rng.choice(["A", "B", "C"], size=n, p=[0.7, 0.2, 0.1])]
        confs = rng.uniform(0.1, 1.0, n).tolist()
        got = vote_clip([FrameLabel(i, s, c) for i, (s, c) in enumerate(zip(seq, confs))])
        lab, status, agree, conf = vote_oracle(seq, confs, 5, 0.9)
        assert (got.label, got.status) == (lab, status)
        assert got.agreement == pytest.approx(agree, abs=1e-12)
        assert got.confidence == pytest.approx(conf, abs=1e-12)


def test_segment_clips_windows():
    seq = [FrameLabel(f, "A", 0.9) for f in (5, 10, 34, 35, 36, 100)]
    segs = segment_clips(seq, 30)
    assert [[fl.frame for fl in s] for s in segs] == [[5, 10, 34], [35, 36], [100]]
    assert segment_clips([], 30) == []


def test_size_prior_lookup():
    table = size_prior_table({"quadrotor": 0.3, "fixed_wing": 1.2})
    assert lookup_size_prior("fixed_wing", table) == 1.2
    with pytest.raises(ConfigError, match="quadrotor"):
        lookup_size_prior("blimp", table)
    with pytest.raises(ConfigError):
        size_prior_table({"x": -1.0})


def test_accuracy():
    preds = [ClipLabel("A", 1, "confirmed", 1), ClipLabel("B", 1, "uncertain", 0.6)]
    assert accuracy(preds, ["A", "A"]) == 0.5
