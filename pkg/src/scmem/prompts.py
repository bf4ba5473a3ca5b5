"""Prompt packs: template files with {{placeholder}} slots, one per role.

Packs are data, not code — a directory with one ``<role>.txt`` per prompt
role. Swapping language or wording variants means pointing at another
directory; nothing is rebuilt.
"""

from __future__ import annotations

import re
from importlib import resources
from pathlib import Path

from .errors import InputError

ROLES = (
    "activation_decision",
    "summary_decision",
    "dialogue_fusion",
    "turn_summarization",
    "block_summarization",
    "merge_summarization",
)

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class PromptPack:
    def __init__(self, pack_id: str, templates: dict[str, str]):
        missing = [role for role in ROLES if role not in templates]
        if missing:
            raise InputError(f"prompt pack {pack_id!r} is missing templates: {missing}")
        self.pack_id = pack_id
        self.templates = dict(templates)

    @classmethod
    def from_dir(cls, path: str | Path, pack_id: str | None = None) -> "PromptPack":
        directory = Path(path)
        templates = {}
        for role in ROLES:
            file = directory / f"{role}.txt"
            if file.is_file():
                templates[role] = file.read_text(encoding="utf-8")
        return cls(pack_id or directory.name, templates)

    @classmethod
    def bundled(cls, pack_id: str = "en") -> "PromptPack":
        root = resources.files("scmem").joinpath("prompt_packs", pack_id)
        templates = {}
        for role in ROLES:
            entry = root.joinpath(f"{role}.txt")
            if entry.is_file():
                templates[role] = entry.read_text(encoding="utf-8")
        return cls(pack_id, templates)

    def render(self, role: str, **slots: str) -> str:
        if role not in self.templates:
            raise InputError(f"prompt pack {self.pack_id!r} has no role {role!r}")

        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name not in slots:
                raise InputError(f"template {role!r} needs a value for slot {name!r}")
            return slots[name]

        return _PLACEHOLDER.sub(substitute, self.templates[role])
