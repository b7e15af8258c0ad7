"""Exact-id drug description lookup backed by a JSON-lines file."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class DuplicateKey(ValueError):
    pass


@dataclass(frozen=True)
class Miss:
    drug_id: str

    def __bool__(self):
        return False


class KnowledgeBase:
    def __init__(self, entries=None):
        self.entries = dict(entries or {})

    @classmethod
    def load(cls, path):
        entries = {}
        first_line = {}
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            did = str(rec["drug_id"])
            if did in entries:
                raise DuplicateKey(f"{path}:{n}: drug id {did!r} already defined on line {first_line[did]}")
            entries[did] = rec["description"]
            first_line[did] = n
        return cls(entries)

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for did in sorted(self.entries):
                fh.write(json.dumps({"drug_id": did, "description": self.entries[did]}) + "\n")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, drug_id):
        return drug_id in self.entries

    def retrieve(self, drug_id):
        if drug_id in self.entries:
            return self.entries[drug_id]
        return Miss(drug_id)


def retrieve(drug_id, kb: KnowledgeBase):
    return kb.retrieve(drug_id)
