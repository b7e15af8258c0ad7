"""Prompt rendering from the shipped templates."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .knowledge import KnowledgeBase, Miss
from .response import response_for
from .tokenizer import EOS, tokenize, tokenize_description

log = logging.getLogger(__name__)

SLOT_NAMES = ("SLOT_EC", "SLOT_ED1", "SLOT_ED2")
SCHEME_NAMES = {"loewe": "Loewe", "bliss": "Bliss", "hsa": "HSA", "zip": "ZIP"}
_PLACEHOLDER = re.compile(r"\{([A-Z0-9_]+)\}")


class MissingKnowledge(LookupError):
    pass


def load_template(name):
    return resources.files("synergraph").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def load_questions():
    out = {}
    for line in load_template("questions").splitlines():
        if line.strip():
            key, text = line.split("\t", 1)
            out[key] = text
    return out


@dataclass
class Prompt:
    """A rendered prompt.

    ``segments`` alternates token-id arrays and slot names; slot rows are
    spliced in at model time.  ``text`` is the rendering with slot markers
    removed, so without an empty description the sequence length is
    ``len(tokenize(text)) + rows_per_slot * len(slots)``.
    """

    stage: str
    text: str
    segments: list
    target: str = ""
    spans: dict = field(default_factory=dict)   # name -> (segment index, start, end)

    @property
    def slots(self):
        return [s for s in self.segments if isinstance(s, str)]

    @property
    def token_ids(self):
        return np.concatenate([s for s in self.segments if not isinstance(s, str)])

    @property
    def target_ids(self):
        return np.array(tokenize(self.target) + [EOS], dtype=np.int64)

    def length(self, rows_per_slot=1):
        return len(self.token_ids) + rows_per_slot * len(self.slots)

    def position_of(self, name, rows_per_slot=1):
        """Absolute [start, end) sequence positions of a named text span."""
        seg_i, start, end = self.spans[name]
        offset = 0
        for s in self.segments[:seg_i]:
            offset += rows_per_slot if isinstance(s, str) else len(s)
        return offset + start, offset + end


def render(template, values, slot_names=SLOT_NAMES, empty_desc_key="CELL_DESC"):
    """Split a template into token segments and slot markers."""
    segments, text_parts, spans = [], [], {}
    current = []
    pos = 0
    for m in _PLACEHOLDER.finditer(template):
        lit = template[pos:m.start()]
        current += tokenize(lit)
        text_parts.append(lit)
        key = m.group(1)
        if key in slot_names:
            segments.append(np.array(current, dtype=np.int64))
            segments.append(key)
            current = []
        else:
            if key not in values:
                raise KeyError(f"template placeholder {{{key}}} has no value")
            val = values[key]
            ids = tokenize_description(val) if key == empty_desc_key else tokenize(val)
            spans[key] = (len(segments), len(current), len(current) + len(ids))
            current += ids
            text_parts.append(val)
        pos = m.end()
    lit = template[pos:]
    current += tokenize(lit)
    text_parts.append(lit)
    segments.append(np.array(current, dtype=np.int64))
    return segments, "".join(text_parts), spans


def knowledge_response(sample, kb: KnowledgeBase):
    d1, d2 = kb.retrieve(sample.drug_a_id), kb.retrieve(sample.drug_b_id)
    if isinstance(d1, Miss) and isinstance(d2, Miss):
        raise MissingKnowledge(f"no description for {sample.drug_a_id} or {sample.drug_b_id}")
    lines = []
    for tag, d in (("Drug 1", d1), ("Drug 2", d2)):
        if isinstance(d, Miss):
            log.warning("no description for %s; answering with the other drug only", d.drug_id)
        else:
            lines.append(f"{tag}: {d}")
    return "\n".join(lines)


def build_prompt(stage, sample, drugs, cell, kb=None, question="P1"):
    """Render the instruction or task prompt for ``sample``.

    ``drugs`` maps ids to records with a ``smiles`` attribute and ``cell``
    is the sample's cell-line profile (its ``description`` may be empty).
    """
    try:
        s1, s2 = drugs[sample.drug_a_id].smiles, drugs[sample.drug_b_id].smiles
    except KeyError as exc:
        raise KeyError(f"unknown drug {exc.args[0]!r}") from None
    questions = load_questions()
    values = {"CELL_DESC": getattr(cell, "description", "") or "", "SMILES_1": s1, "SMILES_2": s2}
    if stage == "instruction":
        if kb is None:
            raise ValueError("instruction prompts need a knowledge base")
        values["QUESTION"] = questions["K"]
        target = knowledge_response(sample, kb)
        segments, text, spans = render(load_template("instruction"), values)
    elif stage == "task":
        q = questions.get(question, question)
        values["QUESTION"] = q.replace("[score]", SCHEME_NAMES.get(sample.scheme, sample.scheme))
        target = response_for(sample.score).serialize()
        segments, text, spans = render(load_template("task"), values)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    return Prompt(stage, text, segments, target, spans)
