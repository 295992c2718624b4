"""Access-audit hooks for raw participant data.

The sandbox-side code paths (clustering, recommendation, collaborator
selection) must never touch raw market data; only the participant-side
transform/privatize steps and federated clients' local training may.
Readers of raw data call :func:`record`, and code that must not trigger
such reads runs inside :func:`guard`.
"""

from contextlib import contextmanager

from .errors import AuditViolation

# (tag, detail) tuples, in call order; cleared only by tests
_events: list[tuple[str, str]] = []
# stack of currently forbidden tags
_guards: list[str] = []

RAW_READ = "raw-read"
SHARE_READ = "share-read"


def record(tag: str, detail: str = "") -> None:
    """Log one access event; raises if the tag is currently guarded."""
    if tag in _guards:
        raise AuditViolation(f"{tag} access during guarded section: {detail or '<unnamed>'}")
    _events.append((tag, detail))


@contextmanager
def guard(tag: str):
    """Forbid `tag` events inside the with-block."""
    _guards.append(tag)
    try:
        yield
    finally:
        _guards.remove(tag)


def events(tag: str | None = None) -> list[tuple[str, str]]:
    if tag is None:
        return list(_events)
    return [e for e in _events if e[0] == tag]


def reset() -> None:
    _events.clear()
