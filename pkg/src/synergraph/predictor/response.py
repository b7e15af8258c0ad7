"""Staged answer format: label, then score interval, then the exact score."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

LABELS = ("synergistic", "antagonistic")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?")
_WORD = re.compile(r"[a-z]+")


class ParseFailure(ValueError):
    def __init__(self, position, expected, text=""):
        self.position = position
        self.expected = expected
        super().__init__(f"at position {position}: expected {expected}")


@dataclass(frozen=True)
class StructuredResponse:
    label: str
    score_low: float
    score_high: float
    score: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if not (self.score_low <= self.score <= self.score_high):
            raise ValueError("score lies outside its interval")
        if self.label == "synergistic" and self.score < 0:
            raise ValueError("synergistic label with a negative score")
        if self.label == "antagonistic" and self.score > 0:
            raise ValueError("antagonistic label with a positive score")

    def serialize(self):
        return (f"label: {self.label}; range: [{self.score_low!r}, {self.score_high!r}]; "
                f"score: {self.score!r}")


def serialize(resp: StructuredResponse):
    return resp.serialize()


def response_for(score, width=10.0, digits=1):
    """Target response for a labelled sample: the score rounded, inside its width-``width`` bin."""
    s = float(round(score, digits))
    low = math.floor(s / width) * width
    high = low + width
    return StructuredResponse("synergistic" if s >= 0 else "antagonistic", float(low), float(high), s)


def parse_response(text):
    pos = 0

    def literal(lit):
        nonlocal pos
        if not text.startswith(lit, pos):
            raise ParseFailure(pos, repr(lit), text)
        pos += len(lit)

    def number():
        nonlocal pos
        m = _NUMBER.match(text, pos)
        if not m:
            raise ParseFailure(pos, "number", text)
        pos = m.end()
        return float(m.group())

    literal("label: ")
    m = _WORD.match(text, pos)
    if not m or m.group() not in LABELS:
        raise ParseFailure(pos, " or ".join(LABELS), text)
    label = m.group()
    pos = m.end()
    literal("; range: [")
    low = number()
    literal(", ")
    high = number()
    literal("]; score: ")
    score_pos = pos
    score = number()
    if pos != len(text):
        raise ParseFailure(pos, "end of response", text)
    if not low <= score <= high:
        raise ParseFailure(score_pos, f"score within [{low!r}, {high!r}] (interval violation)", text)
    try:
        return StructuredResponse(label, low, high, score)
    except ValueError:
        raise ParseFailure(score_pos, f"score consistent with label {label}", text) from None
