"""Patient severity classes shared across the toolkit."""

from __future__ import annotations

from enum import Enum


class PatientClass(Enum):
    """Cognitive classes: healthy, mild impairment, major impairment.

    The value is the one-letter code used in files, traces and the API
    (``h`` / ``m`` / ``M``).
    """

    HEALTHY = "h"
    MILD = "m"
    MAJOR = "M"

    @property
    def code(self) -> str:
        return self.value

    @property
    def severity(self) -> int:
        """Rank for escalation ordering: healthy < mild < major."""
        return _SEVERITY[self]

    @property
    def test_name(self) -> str:
        """Name of the game test associated with this class (``A_h`` ...)."""
        return f"A_{self.value}"

    @classmethod
    def from_code(cls, code: str) -> "PatientClass":
        try:
            return cls(code)
        except ValueError:
            raise UnknownClassError(code) from None

    @classmethod
    def from_test_name(cls, name: str) -> "PatientClass":
        if name.startswith("A_"):
            return cls.from_code(name[2:])
        raise UnknownClassError(name)


class UnknownClassError(ValueError):
    def __init__(self, code: str):
        super().__init__(f"unknown patient class {code!r} (expected h, m or M)")
        self.code = code


_SEVERITY = {PatientClass.HEALTHY: 0, PatientClass.MILD: 1, PatientClass.MAJOR: 2}

#: Classes in escalation order (mildest first).
CLASS_ORDER = (PatientClass.HEALTHY, PatientClass.MILD, PatientClass.MAJOR)
