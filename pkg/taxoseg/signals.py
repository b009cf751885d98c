"""
Per-item processing signals.

Signals are backed by blinker when it is installed (``pip install taxoseg[signals]``).
Without blinker, sending is a silent no-op and subscribing raises ``RuntimeError``.
"""
import logging
from typing import Any

log = logging.getLogger(__name__)
log.addHandler(logging.NullHandler())

signals_available = False


class _NoopNamespace(object):
    def signal(self, name, doc=None):
        return _NoopSignal(name, doc)


class _NoopSignal(object):
    """
    Stand-in used when blinker is missing: ``send`` does nothing, every
    subscription method raises.
    """

    def __init__(self, name, doc=None):
        self.name = name
        self.__doc__ = doc

    def send(self, *args, **kwargs):
        return []

    def _unavailable(self, *args, **kwargs):
        raise RuntimeError("signal '{}' cannot be subscribed to: blinker is not installed".format(self.name))

    connect = disconnect = has_receivers_for = receivers_for = connected_to = _unavailable


try:
    from blinker import Namespace
    signals_available = True
except ImportError:  # pragma: no cover
    Namespace = _NoopNamespace  # type:ignore

_signals = Namespace()

pre_item_process = _signals.signal(
    'pre_item_process',
    doc="Sent before a per-file work item starts. kwargs: command, stem, item_uuid",
)
post_item_process = _signals.signal(
    'post_item_process',
    doc="Sent after a per-file work item ends. kwargs: command, stem, item_uuid, ok",
)


def send_safely(signal: Any, sender: Any, **kwargs: Any) -> None:
    """
    Sends `signal`, logging (never raising) receiver failures.
    """
    try:
        signal.send(sender, **kwargs)
    except Exception:
        log.exception("%s receiver threw an exception.", signal.name)
