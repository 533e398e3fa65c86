"""Mapping failure evidence onto the shared [0, 1] severity scale."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .quantiles import percentile


class SeverityDirection(enum.Enum):
    REPORTS_UP = "reports_up"
    PLAYERS_DOWN = "players_down"


class OperatorLabel(enum.Enum):
    MAINTENANCE = "maintenance"
    MINOR = "minor"
    MAJOR = "major"

    @classmethod
    def parse(cls, text: str) -> "OperatorLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(
                f"invalid operator label {text!r}; expected one of "
                + ", ".join(m.value for m in cls)
            ) from None


OPERATOR_BASE = {
    OperatorLabel.MAINTENANCE: 0.25,
    OperatorLabel.MINOR: 0.5,
    OperatorLabel.MAJOR: 1.0,
}


@dataclass(frozen=True)
class SeverityScale:
    p5: float
    p95: float
    direction: SeverityDirection = SeverityDirection.REPORTS_UP

    def __post_init__(self):
        if self.p5 > self.p95:
            raise ValueError(f"p5 ({self.p5}) exceeds p95 ({self.p95})")

    @property
    def degenerate(self) -> bool:
        return self.p5 == self.p95


def fit_scale(summits, direction: SeverityDirection = SeverityDirection.REPORTS_UP) -> SeverityScale:
    """5th/95th percentiles of the failure summits."""
    summits = list(summits)
    if len(summits) < 2:
        raise ValueError(f"at least 2 summits are needed to fit a scale, got {len(summits)}")
    return SeverityScale(percentile(summits, 5), percentile(summits, 95), direction)


def severity(value: float, scale: SeverityScale) -> float:
    """Min-max scaled severity clamped to [0, 1].

    For player counts the direction is reversed: the lowest counts are the
    most severe. A degenerate scale is a step at its single value.
    """
    if scale.degenerate:
        if scale.direction is SeverityDirection.REPORTS_UP:
            return 1.0 if value >= scale.p5 else 0.0
        return 1.0 if value <= scale.p5 else 0.0
    s = (value - scale.p5) / (scale.p95 - scale.p5)
    s = min(1.0, max(0.0, s))
    return 1.0 - s if scale.direction is SeverityDirection.PLAYERS_DOWN else s


def operator_severity(
    label: OperatorLabel, affected_services: int, total_services: int, base=None
) -> float:
    """Operator label weight times the fraction of services affected."""
    if total_services <= 0:
        raise ValueError("total_services must be positive")
    if not 0 < affected_services <= total_services:
        raise ValueError(
            f"affected_services must lie in (0, {total_services}], got {affected_services}"
        )
    weight = (base or OPERATOR_BASE)[label]
    return min(1.0, max(0.0, weight * affected_services / total_services))
