"""Synthetic app-usage log generator with controllable signal structure.

Each user's timeline is a sequence of sessions spaced far enough apart that
one session lands in one analysis window. Within a session, a latent app is
chosen from the session's context chunk and/or the previous session's latent
app, and most events in the session use that app. The ``coupling`` mode
controls which inputs carry signal:

* ``semantic_only``: the latent app is a function of the context chunk alone.
* ``history_only``: the latent app is a function of the previous latent alone.
* ``joint``: the latent app is a function of both, so neither input is
  individually sufficient.

The leftover events are uniform noise, which keeps the task from being
trivially solvable by exact lookup.
"""

from __future__ import annotations

from .corpus import Event
from .numerics import make_rng

SESSION_EVENTS = 4
EVENT_SPACING = 60
SESSION_GAP = 3600
NOISE_RATE = 0.15

COUPLINGS = ("semantic_only", "history_only", "joint")


def _latent_app(coupling: str, chunk: int, prev: int, apps: int, rng) -> int:
    if coupling == "semantic_only":
        return (11 * chunk + 3) % apps
    if coupling == "history_only":
        if rng.random() < 0.5:
            return prev
        return (7 * prev + 3) % apps
    # joint: depends on both the chunk and the previous latent app
    return (11 * chunk + 7 * prev + 1) % apps


def synthesize(
    seed: int,
    users: int = 20,
    apps: int = 12,
    chunks: int = 12,
    events_per_user: int = 200,
    coupling: str = "joint",
) -> list[Event]:
    """Generate a deterministic synthetic event log.

    Args:
        seed: generator seed; equal seeds and parameters give equal output.
        users: number of distinct users.
        apps: size of the app universe.
        chunks: size of the semantic-chunk universe.
        events_per_user: events generated per user.
        coupling: one of ``semantic_only``, ``history_only``, ``joint``.
    """
    if coupling not in COUPLINGS:
        raise ValueError(f"coupling must be one of {COUPLINGS}, got {coupling!r}")
    if users < 1 or apps < 2 or chunks < 1 or events_per_user < 1:
        raise ValueError("users, chunks, events_per_user must be >= 1 and apps >= 2")

    rng = make_rng(seed)
    events: list[Event] = []
    for u in range(users):
        user_id = f"u{u:04d}"
        t0 = 86400 * u
        prev_latent = int(rng.integers(apps))
        n_sessions = (events_per_user + SESSION_EVENTS - 1) // SESSION_EVENTS
        emitted = 0
        for s in range(n_sessions):
            chunk = int(rng.integers(chunks))
            latent = _latent_app(coupling, chunk, prev_latent, apps, rng)
            session_start = t0 + s * SESSION_GAP
            for j in range(SESSION_EVENTS):
                if emitted >= events_per_user:
                    break
                if rng.random() < NOISE_RATE:
                    app = int(rng.integers(apps))
                else:
                    app = latent
                events.append(
                    Event(
                        user_id=user_id,
                        timestamp=session_start + j * EVENT_SPACING,
                        app=f"app{app:03d}",
                        semantic_chunks=(f"c{chunk:03d}",),
                    )
                )
                emitted += 1
            prev_latent = latent
    return events
