"""Shared report container for hypothesis-test results."""

from __future__ import annotations

from dataclasses import dataclass, field


REJECT = "Reject"
FAIL_TO_REJECT = "FailToReject"


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    critical_value: float
    decision: str
    level: float | None = None
    confidence_interval: tuple[float, float] | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "decision": self.decision,
        }
        if self.level is not None:
            out["level"] = self.level
        if self.confidence_interval is not None:
            out["confidence_interval"] = list(self.confidence_interval)
        out.update(self.details)
        return out
