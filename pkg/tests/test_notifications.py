"""Run summaries sent through Apprise."""

from __future__ import annotations

from types import SimpleNamespace
from typing import List, Tuple

import pytest

import electrosense.notifications as notifications
from electrosense.notifications import RunNotifier, format_completion


class _FakeApprise:
    def __init__(self) -> None:
        self.urls: List[str] = []
        self.sent: List[Tuple[str, str]] = []

    def add(self, url: str) -> bool:
        self.urls.append(url)
        return True

    def __len__(self) -> int:
        return len(self.urls)

    def notify(self, title: str, body: str) -> bool:
        self.sent.append((title, body))
        return True


@pytest.fixture
def fake_apprise(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(notifications, "APPRISE_AVAILABLE", True)
    monkeypatch.setattr(notifications, "apprise", SimpleNamespace(Apprise=_FakeApprise),
                        raising=False)


def test_format_completion_lists_metrics_sorted() -> None:
    text = format_completion("reconstruct", "runs/x", {"residual": 0.012345678, "nonzeros": 12,
                                                       "converged": True, "trace": [1, 2]})
    assert text.splitlines() == [
        "Command: reconstruct",
        "Output: runs/x",
        "converged: True",
        "nonzeros: 12",
        "residual: 0.0123457",
    ]


def test_notifier_without_urls_is_inactive() -> None:
    notifier = RunNotifier([" ", ""])
    assert not notifier.active
    assert notifier.send("t", "b") is False


def test_disabled_notifier_ignores_urls(fake_apprise) -> None:
    assert not RunNotifier(["json://localhost"], enabled=False).active


def test_completed_and_failed_runs_are_sent(fake_apprise) -> None:
    notifier = RunNotifier(["json://localhost", "  "])
    assert notifier.active
    assert notifier.apobj.urls == ["json://localhost"]
    assert notifier.run_completed("image", "runs/y", {"hit_fraction": 0.9})
    assert notifier.run_failed("simulate", ValueError("bad shape"))
    (title, body), (fail_title, fail_body) = notifier.apobj.sent
    assert title == "electrosense image finished"
    assert "hit_fraction: 0.9" in body
    assert fail_title == "electrosense simulate failed"
    assert fail_body == "ValueError: bad shape"


def test_send_errors_are_logged_not_raised(fake_apprise, caplog) -> None:
    notifier = RunNotifier(["json://localhost"])

    def boom(title: str, body: str) -> bool:
        raise RuntimeError("network down")

    notifier.apobj.notify = boom
    assert notifier.send("t", "b") is False
    assert "network down" in caplog.text
