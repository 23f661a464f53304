"""Synthetic generator: determinism, shape, and coupling structure."""

import math
from collections import Counter

import pytest

from cosem.synth import SESSION_EVENTS, SESSION_GAP, synthesize


def event_triples(events):
    """(chunk, previous app, app) per event, per user, skipping first events."""
    by_user = {}
    for e in sorted(events, key=lambda e: (e.user_id, e.timestamp)):
        by_user.setdefault(e.user_id, []).append(e)
    triples = []
    for stream in by_user.values():
        for prev, cur in zip(stream, stream[1:]):
            triples.append((cur.semantic_chunks[0], prev.app, cur.app))
    return triples


def plugin_mi(pairs):
    """Plug-in mutual information (nats) of a list of (x, y) samples."""
    n = len(pairs)
    joint = Counter(pairs)
    px = Counter(x for x, _ in pairs)
    py = Counter(y for _, y in pairs)
    return sum(
        (c / n) * math.log((c / n) / ((px[x] / n) * (py[y] / n)))
        for (x, y), c in joint.items()
    )


class TestDeterminismAndShape:
    def test_same_seed_identical(self):
        a = synthesize(seed=3, users=4, apps=5, chunks=5, events_per_user=40)
        b = synthesize(seed=3, users=4, apps=5, chunks=5, events_per_user=40)
        assert a == b

    def test_different_seed_differs(self):
        a = synthesize(seed=3, users=4, apps=5, chunks=5, events_per_user=40)
        b = synthesize(seed=4, users=4, apps=5, chunks=5, events_per_user=40)
        assert a != b

    def test_counts_and_ordering(self):
        events = synthesize(seed=0, users=3, apps=4, chunks=4, events_per_user=25)
        assert len(events) == 75
        per_user = Counter(e.user_id for e in events)
        assert set(per_user.values()) == {25}
        for user in per_user:
            stamps = [e.timestamp for e in events if e.user_id == user]
            assert stamps == sorted(stamps)

    def test_sessions_fit_one_window(self):
        events = synthesize(seed=1, users=1, apps=4, chunks=4, events_per_user=12)
        # events come in groups of SESSION_EVENTS sharing one chunk, one
        # window apart
        for s in range(12 // SESSION_EVENTS):
            session = events[s * SESSION_EVENTS:(s + 1) * SESSION_EVENTS]
            assert len({e.semantic_chunks for e in session}) == 1
            span = session[-1].timestamp - session[0].timestamp
            assert span < SESSION_GAP

    @pytest.mark.parametrize("kwargs", [
        {"users": 0}, {"apps": 1}, {"chunks": 0}, {"events_per_user": 0},
        {"coupling": "bogus"},
    ])
    def test_parameter_validation(self, kwargs):
        base = {"seed": 0, "users": 2, "apps": 4, "chunks": 4, "events_per_user": 8}
        base.update(kwargs)
        with pytest.raises(ValueError):
            synthesize(**base)


class TestCouplingStructure:
    def test_semantic_only_app_follows_chunk(self):
        events = synthesize(seed=5, users=10, apps=10, chunks=10,
                            events_per_user=200, coupling="semantic_only")
        by_chunk = {}
        for e in events:
            by_chunk.setdefault(e.semantic_chunks[0], Counter())[e.app] += 1
        # one dominant app per chunk (noise rate is 0.15)
        for counts in by_chunk.values():
            top = counts.most_common(1)[0][1]
            assert top / sum(counts.values()) > 0.7

    def test_joint_not_predictable_from_chunk_alone(self):
        events = synthesize(seed=5, users=10, apps=10, chunks=10,
                            events_per_user=200, coupling="joint")
        by_chunk = {}
        for e in events:
            by_chunk.setdefault(e.semantic_chunks[0], Counter())[e.app] += 1
        for counts in by_chunk.values():
            top = counts.most_common(1)[0][1]
            assert top / sum(counts.values()) < 0.6

    def test_joint_mutual_information_needs_both(self):
        # Counting-based MI estimates: under `joint`, (chunk, prev app)
        # together must say more about the next app than either does alone.
        events = synthesize(seed=11, users=20, apps=8, chunks=8,
                            events_per_user=400, coupling="joint")
        triples = event_triples(events)
        mi_joint = plugin_mi([((c, p), a) for c, p, a in triples])
        mi_chunk = plugin_mi([(c, a) for c, p, a in triples])
        mi_prev = plugin_mi([(p, a) for c, p, a in triples])
        assert mi_joint > mi_chunk + 0.1
        assert mi_joint > mi_prev + 0.1

    def test_history_only_chunk_is_uninformative(self):
        events = synthesize(seed=11, users=20, apps=8, chunks=8,
                            events_per_user=400, coupling="history_only")
        triples = event_triples(events)
        mi_chunk = plugin_mi([(c, a) for c, p, a in triples])
        mi_prev = plugin_mi([(p, a) for c, p, a in triples])
        assert mi_prev > mi_chunk + 0.2
