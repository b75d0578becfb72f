"""ICD-9 / ICD-10 chronic kidney disease codes mapped onto eight stage classes."""

from __future__ import annotations

from typing import Iterable, Optional

STAGE_NAMES = (
    "Stage 1",
    "Stage 2",
    "Stage 3",
    "Stage 4",
    "Stage 5",
    "End stage renal disease",
    "Other CKD",
    "Unspecified",
)
NUM_STAGES = len(STAGE_NAMES)

# (ICD-10, ICD-9 or None, class)
ICD_TABLE = (
    ("N18.1", "585.1", 0),
    ("N18.2", "585.2", 1),
    ("N18.3", "585.3", 2),
    ("N18.4", "585.4", 3),
    ("N18.5", "585.5", 4),
    ("N18.6", "585.6", 5),
    ("N18.8", None, 6),
    ("N18.9", "585.9", 7),
)


def _normalize(code: str) -> str:
    return code.strip().upper().replace(".", "")


_LOOKUP = {}
for _icd10, _icd9, _cls in ICD_TABLE:
    _LOOKUP[_normalize(_icd10)] = _cls
    if _icd9 is not None:
        _LOOKUP[_normalize(_icd9)] = _cls


def map_icd_to_stage(code: str) -> Optional[int]:
    """Stage class 0-7, or ``None`` when the code is outside the table."""
    return _LOOKUP.get(_normalize(code))


def stage_from_codes(codes: Iterable[str]) -> Optional[int]:
    """Resolve an admission carrying several CKD codes.

    The highest specific stage (classes 0-5) wins; otherwise "other" (6),
    otherwise "unspecified" (7).
    """
    classes = {c for c in (map_icd_to_stage(code) for code in codes) if c is not None}
    if not classes:
        return None
    specific = [c for c in classes if c <= 5]
    if specific:
        return max(specific)
    return 6 if 6 in classes else 7
