"""Extract and validate the JSON object inside a chat-model reply."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Union

from ..model import CHOICE_LABELS, COGNITIVE_FIELDS

# Field kinds understood by ``parse_structured``. A schema is a dict mapping a
# field name to a kind string, or to a one-element list holding a nested
# schema (a JSON array of objects).
AOI = "aoi"
UNIT = "unit"
CHOICE = "choice"
TEXT = "text"
INDEX = "index"
ID = "id"

TRANSCRIPT_SCHEMA: dict[str, Any] = {
    "index": INDEX,
    "gaze_aoi": AOI,
    "motor_aoi": AOI,
    **{name: UNIT for name in COGNITIVE_FIELDS},
}
ANSWER_SCHEMA: dict[str, Any] = {"question_id": ID, "choice": CHOICE}
STEP_SCHEMA: dict[str, Any] = {
    "reasoning": TEXT,
    "transcripts": [TRANSCRIPT_SCHEMA],
    "answers": [ANSWER_SCHEMA],
}


@dataclass(frozen=True)
class ParseFailure:
    reason: str

    def __bool__(self) -> bool:
        return False


def extract_json_object(text: str) -> Union[dict[str, Any], None]:
    """Return the first balanced ``{...}`` span that decodes to a JSON object.

    Scans brace depth while honouring string literals and escapes. A span
    that fails to decode does not stop the scan; the next ``{`` is tried.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_str = False
                continue
            if ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = json.loads(text[start : i + 1])
                    except (ValueError, RecursionError):
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    return None


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check(obj: dict[str, Any], schema: dict[str, Any], path: str) -> Union[dict[str, Any], ParseFailure]:
    out: dict[str, Any] = {}
    for name, kind in schema.items():
        where = f"{path}{name}"
        if name not in obj:
            return ParseFailure(f"missing field {where}")
        v = obj[name]
        if isinstance(kind, list):
            if not isinstance(v, list):
                return ParseFailure(f"{where}: expected a list")
            items = []
            for i, item in enumerate(v):
                if not isinstance(item, dict):
                    return ParseFailure(f"{where}[{i}]: expected an object")
                parsed = _check(item, kind[0], f"{where}[{i}].")
                if isinstance(parsed, ParseFailure):
                    return parsed
                items.append(parsed)
            out[name] = items
        elif kind in (AOI, INDEX):
            if not _is_int(v) or v < 1:
                return ParseFailure(f"{where}: expected a positive integer, got {v!r}")
            out[name] = v
        elif kind == UNIT:
            if not _is_number(v) or not 0.0 <= v <= 1.0:
                return ParseFailure(f"{where}: {v!r} outside range [0,1]")
            out[name] = float(v)
        elif kind == CHOICE:
            if v not in CHOICE_LABELS:
                return ParseFailure(f"{where}: {v!r} is not one of A, B, C, D")
            out[name] = v
        elif kind == TEXT:
            if not isinstance(v, str):
                return ParseFailure(f"{where}: expected text")
            out[name] = v
        elif kind == ID:
            if not isinstance(v, (str, int)) or isinstance(v, bool):
                return ParseFailure(f"{where}: expected an identifier")
            out[name] = str(v)
        else:
            raise ValueError(f"unknown schema kind {kind!r}")
    return out


def parse_structured(
    response: Union[str, bytes], schema: dict[str, Any] = STEP_SCHEMA
) -> Union[dict[str, Any], ParseFailure]:
    """Parse the first JSON object in ``response`` against ``schema``.

    Never raises on bad input; returns a falsy ``ParseFailure`` naming the
    first violation instead. Extra fields are ignored.
    """
    if isinstance(response, bytes):
        response = response.decode("utf-8", errors="replace")
    if not isinstance(response, str):
        return ParseFailure("response is not text")
    obj = extract_json_object(response)
    if obj is None:
        return ParseFailure("no JSON object found")
    return _check(obj, schema, "")
