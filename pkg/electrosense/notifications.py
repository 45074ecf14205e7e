"""Optional Apprise notifications when a run finishes or fails."""

from __future__ import annotations

import logging
from typing import Any, Dict, Iterable, List, Optional

try:
    import apprise

    APPRISE_AVAILABLE = True
except ImportError:
    APPRISE_AVAILABLE = False

logger = logging.getLogger(__name__)


class RunNotifier:
    """Sends run summaries to every configured Apprise URL."""

    def __init__(self, urls: Optional[Iterable[str]] = None, *, enabled: bool = True) -> None:
        self.urls: List[str] = [u.strip() for u in (urls or []) if u and u.strip()]
        self.apobj = None
        if not enabled or not self.urls:
            return
        if not APPRISE_AVAILABLE:
            logger.warning("Apprise not installed. Install with: pip install apprise")
            return
        self.apobj = apprise.Apprise()
        for url in self.urls:
            self.apobj.add(url)
        logger.info("Loaded %s Apprise service(s)", len(self.apobj))

    @property
    def active(self) -> bool:
        return self.apobj is not None and len(self.apobj) > 0

    def send(self, title: str, message: str) -> bool:
        if not self.active:
            return False
        try:
            success = bool(self.apobj.notify(title=title, body=message))
        except Exception as e:
            logger.error("Failed to send Apprise notification: %s", e)
            return False
        if success:
            logger.info("Apprise notification sent to %s service(s)", len(self.apobj))
        else:
            logger.warning("Some Apprise notifications may have failed")
        return success

    def run_completed(self, command: str, out_dir: str, metrics: Dict[str, Any]) -> bool:
        return self.send(f"electrosense {command} finished", format_completion(command, out_dir, metrics))

    def run_failed(self, command: str, error: BaseException) -> bool:
        return self.send(f"electrosense {command} failed", f"{type(error).__name__}: {error}")


def format_completion(command: str, out_dir: str, metrics: Dict[str, Any]) -> str:
    lines = [f"Command: {command}", f"Output: {out_dir}"]
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, float):
            lines.append(f"{key}: {value:.6g}")
        elif isinstance(value, (int, str, bool)):
            lines.append(f"{key}: {value}")
    return "\n".join(lines)
