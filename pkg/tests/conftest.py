"""Shared builders for corpus objects used across the test modules."""

import pytest

from cosem.corpus import (
    SplitCorpus,
    Vocabulary,
    WindowInstance,
    apply_filters,
    build_vocabularies,
    chronological_split,
    windowize,
)
from cosem.synth import synthesize


def make_instance(user="u0", start=0, sem=(), hist=(), targets=(0,), length=3600):
    return WindowInstance(
        user_id=user,
        window_start=start,
        window_end=start + length,
        semantic_ids=tuple(sem),
        history_ids=tuple(hist),
        target_ids=frozenset(targets),
    )


def build_split(events, window_seconds=3600, history_len=4):
    """Vocabularies + windows + chronological split, no filtering."""
    app_vocab, semantic_vocab = build_vocabularies(events)
    instances = windowize(
        events, app_vocab, semantic_vocab,
        window_seconds=window_seconds, history_len=history_len,
    )
    return chronological_split(instances, app_vocab, semantic_vocab)


@pytest.fixture
def toy_instances():
    """Six instances over 5 apps / 5 chunks, matching the small architecture
    used for gradient checking (D=H=4, L=2). History and semantic lengths
    vary; one instance has empty semantic ids and one has a duplicated
    history id, to push gradients through every pooling branch."""
    return [
        make_instance(sem=(1, 2), hist=(0,), targets=(0, 2)),
        make_instance(sem=(3,), hist=(1, 2), targets=(1,)),
        make_instance(sem=(0, 4, 4), hist=(3, 3), targets=(2, 3)),
        make_instance(sem=(), hist=(4, 0, 1), targets=(4,)),
        make_instance(sem=(2, 2, 1), hist=(), targets=(0, 4)),
        make_instance(sem=(4,), hist=(2, 2, 0), targets=(3,)),
    ]


@pytest.fixture
def small_split():
    """A small but trainable corpus from the synthetic generator."""
    events = synthesize(seed=7, users=6, apps=6, chunks=6,
                        events_per_user=60, coupling="joint")
    return build_split(events)
