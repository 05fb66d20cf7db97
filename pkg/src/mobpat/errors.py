"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MobpatError(ValueError):
    """Base class for data errors (CLI exit code 2)."""


class MalformedLine(MobpatError):
    def __init__(self, line_no: int, detail: str = "") -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: malformed record{': ' + detail if detail else ''}")


class BadTimestamp(MobpatError):
    def __init__(self, line_no: int, value: str = "") -> None:
        self.line_no = line_no
        super().__init__(f"line {line_no}: cannot parse timestamp {value!r}")


class UnknownLocation(MobpatError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"unknown location {name!r}")


class DuplicateName(MobpatError):
    pass


class UnknownParent(MobpatError):
    pass


class CycleDetected(MobpatError):
    pass


class BinOutOfRange(MobpatError):
    pass


class EmptyFeatures(MobpatError):
    pass


class WindowTooLong(MobpatError):
    pass


class EmptySet(MobpatError):
    pass


class UnfittedModel(MobpatError):
    pass


class InsufficientHistory(MobpatError):
    pass


class InvalidConfig(MobpatError):
    pass
