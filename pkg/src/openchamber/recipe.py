"""Parsing, validation, and scheduling of "simple"-format climate recipes.

A recipe is a JSON document::

    {"_id": "...", "format": "simple",
     "operations": [[<offset>, <variable>, <value>], ...]}

``offset`` is a non-negative integer number of seconds since recipe start at
which the setpoint takes effect. A setpoint stays in effect until a later
setpoint for the same variable is reached; the operations list is ordered by
offset, and the recipe ends at the largest offset.

Recipes and compiled timelines are immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field

from .variables import VARIABLES

RECIPE_FORMAT = "simple"
_TOP_LEVEL_KEYS = ("_id", "format", "operations")


class RecipeError(ValueError):
    """Base class for recipe validation failures.

    ``index`` is the position of the offending entry in the operations list,
    or None for document-level problems.
    """

    code = "recipe_error"

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"operations[{index}]: {message}"
        super().__init__(message)


class MalformedJson(RecipeError):
    code = "malformed_json"


class UnknownFormat(RecipeError):
    code = "unknown_format"


class EmptyOperations(RecipeError):
    code = "empty_operations"


class UnsortedOffsets(RecipeError):
    code = "unsorted_offsets"


class UnknownVariable(RecipeError):
    code = "unknown_variable"


class ValueOutOfRange(RecipeError):
    code = "value_out_of_range"


class DuplicateSetPoint(RecipeError):
    code = "duplicate_setpoint"


@dataclass(frozen=True, slots=True)
class SetPoint:
    """One (offset, variable, value) target entry."""

    offset: int
    variable: str
    value: float


@dataclass(frozen=True)
class Recipe:
    """A validated simple-format recipe.

    ``extras`` preserves unknown top-level JSON keys so a parse/serialize
    round trip is lossless.
    """

    id: str
    format: str
    operations: tuple[SetPoint, ...]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_operations(self.operations)

    @property
    def duration(self) -> int:
        return max(sp.offset for sp in self.operations)

    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for sp in self.operations:
            seen.setdefault(sp.variable)
        return tuple(seen)


def _check_operations(operations) -> None:
    """Enforce Recipe invariants over an already well-typed operations list."""
    if not operations:
        raise EmptyOperations("operations list is empty")
    seen: set[tuple[int, str]] = set()
    previous = None
    for i, sp in enumerate(operations):
        if previous is not None and sp.offset < previous:
            raise UnsortedOffsets(
                f"offset {sp.offset} is below the preceding offset {previous}", i
            )
        previous = sp.offset
        key = (sp.offset, sp.variable)
        if key in seen:
            raise DuplicateSetPoint(
                f"second setpoint for {sp.variable} at offset {sp.offset}", i
            )
        seen.add(key)


def parse_recipe(raw: bytes | str) -> Recipe:
    """Parse a JSON recipe document, raising a typed RecipeError on any defect.

    Never raises anything but RecipeError subclasses, whatever the input
    bytes look like.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedJson(f"input is not UTF-8: {exc}") from exc
    else:
        text = raw
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise MalformedJson(f"invalid JSON: {exc}") from exc

    if not isinstance(doc, dict):
        raise MalformedJson("top level must be a JSON object")
    rid = doc.get("_id")
    if not isinstance(rid, str) or not rid:
        raise MalformedJson('"_id" must be a non-empty string')
    fmt = doc.get("format")
    if not isinstance(fmt, str):
        raise MalformedJson('"format" must be a string')
    if fmt != RECIPE_FORMAT:
        raise UnknownFormat(f'unsupported recipe format "{fmt}"')
    ops = doc.get("operations")
    if not isinstance(ops, list):
        raise MalformedJson('"operations" must be an array')
    if not ops:
        raise EmptyOperations("operations list is empty")

    setpoints = []
    for i, entry in enumerate(ops):
        if not isinstance(entry, list) or len(entry) != 3:
            raise MalformedJson("entry must be a [offset, variable, value] triple", i)
        offset, variable, value = entry
        if isinstance(offset, bool) or not isinstance(offset, int):
            raise MalformedJson("offset must be an integer number of seconds", i)
        if offset < 0:
            raise MalformedJson("offset must be non-negative", i)
        if not isinstance(variable, str):
            raise MalformedJson("variable must be a string", i)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise MalformedJson("value must be a number", i)
        descriptor = VARIABLES.get(variable)
        if descriptor is None:
            raise UnknownVariable(f'unknown variable "{variable}"', i)
        if not descriptor.in_range(value):
            raise ValueOutOfRange(
                f"{variable} value {value} outside [{descriptor.min}, {descriptor.max}] {descriptor.unit}",
                i,
            )
        setpoints.append(SetPoint(offset, variable, float(value)))

    extras = {k: v for k, v in doc.items() if k not in _TOP_LEVEL_KEYS}
    return Recipe(rid, fmt, tuple(setpoints), extras)


def serialize_recipe(recipe: Recipe) -> bytes:
    """Encode a Recipe back to its JSON document form.

    Inverse of parse_recipe: parse_recipe(serialize_recipe(r)) == r.
    """
    doc = {
        "_id": recipe.id,
        "format": recipe.format,
        "operations": [[sp.offset, sp.variable, sp.value] for sp in recipe.operations],
    }
    doc.update(recipe.extras)
    return json.dumps(doc, ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class RecipeTimeline:
    """Compiled per-variable step functions over recipe time.

    ``steps`` maps each variable to parallel (offsets, values, positions)
    tuples; offsets are strictly increasing per variable and ``positions``
    remember each setpoint's index in the source operations list so
    enumeration is lossless.
    """

    steps: dict[str, tuple[tuple[int, ...], tuple[float, ...], tuple[int, ...]]]
    duration: int

    def variables(self) -> tuple[str, ...]:
        return tuple(self.steps)


def compile_recipe(recipe: Recipe) -> RecipeTimeline:
    """Compile a valid recipe into its per-variable timeline."""
    per_var: dict[str, tuple[list[int], list[float], list[int]]] = {}
    for pos, sp in enumerate(recipe.operations):
        offsets, values, positions = per_var.setdefault(sp.variable, ([], [], []))
        offsets.append(sp.offset)
        values.append(sp.value)
        positions.append(pos)
    steps = {
        var: (tuple(offs), tuple(vals), tuple(poss))
        for var, (offs, vals, poss) in per_var.items()
    }
    return RecipeTimeline(steps, recipe.duration)


def enumerate_steps(timeline: RecipeTimeline) -> list[SetPoint]:
    """Reconstruct the source operations list from a compiled timeline."""
    flat: list[tuple[int, SetPoint]] = []
    for var, (offsets, values, positions) in timeline.steps.items():
        for off, val, pos in zip(offsets, values, positions):
            flat.append((pos, SetPoint(off, var, val)))
    flat.sort(key=lambda pair: pair[0])
    return [sp for _, sp in flat]


def setpoints_at(timeline: RecipeTimeline, t: int) -> tuple[dict[str, float], bool]:
    """Active setpoints at elapsed time t, plus whether the recipe has ended.

    A variable is present once its first setpoint offset is <= t and holds
    the value of the latest setpoint at or before t.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    active: dict[str, float] = {}
    for var, (offsets, values, _) in timeline.steps.items():
        i = bisect_right(offsets, t)
        if i:
            active[var] = values[i - 1]
    return active, t >= timeline.duration
