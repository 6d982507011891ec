from collections import Counter

import pytest

from groupsleuth.corpus import FRAUD, GENUINE, derive_reviewer_labels, format_corpus
from groupsleuth.synth import SynthConfig, generate_synthetic


def test_deterministic_per_seed():
    a = generate_synthetic(SynthConfig(), 42)
    b = generate_synthetic(SynthConfig(), 42)
    c = generate_synthetic(SynthConfig(), 43)
    assert format_corpus(a[0]) == format_corpus(b[0])
    assert a[1] == b[1]
    assert format_corpus(a[0]) != format_corpus(c[0])


def test_planted_groups_shape():
    cfg = SynthConfig()
    corpus, truth = generate_synthetic(cfg, 42)
    assert Counter(t.label for t in truth) == {FRAUD: 30, GENUINE: 30}
    labels = {l.reviewer_id: l.label for l in derive_reviewer_labels(corpus)}
    for t in truth:
        core = [m for m in t.members if labels[m] == t.label]
        assert 3 <= len(core) <= 8
        assert len(core) > len(t.members) / 2
    span = (max(r.date for r in corpus.reviews) - corpus.epoch).days
    assert span < cfg.n_windows * cfg.window_len_days


def test_noise_free_groups_are_pure():
    cfg = SynthConfig(camouflage_rate=0.0, outlier_rate=0.0)
    corpus, truth = generate_synthetic(cfg, 1)
    labels = {l.reviewer_id: l.label for l in derive_reviewer_labels(corpus)}
    for t in truth:
        assert {labels[m] for m in t.members} == {t.label}


def test_validation():
    with pytest.raises(ValueError):
        SynthConfig(group_size=(1, 3)).validate()
    with pytest.raises(ValueError):
        SynthConfig(topic_prob=1.5).validate()
    with pytest.raises(ValueError):
        SynthConfig(n_fraud_groups=0, n_genuine_groups=0, n_background=0).validate()
