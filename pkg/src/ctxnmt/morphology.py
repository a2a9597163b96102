"""Pluggable morphology: analyze surface tokens into (lemma, tags) and
inflect (lemma, tags) back to surfaces.

The bundled toy lexicon is a small romanized pseudo-Russian table meant
for tests and demos. Second-person T/V pairs share one lemma and differ
only in the sg/pl tag, so politeness switching is a tag flip. Real
analyzers can be plugged in by implementing the same two methods.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class Analysis:
    lemma: str
    tags: frozenset[str]

    def __str__(self) -> str:
        return f"{self.lemma}[{','.join(sorted(self.tags))}]"


def analysis_key(a: Analysis) -> tuple[str, tuple[str, ...]]:
    """Deterministic total order (frozensets themselves only give a partial one)."""
    return (a.lemma, tuple(sorted(a.tags)))


class ToyLexicon:
    """Morphology provider backed by `surface<TAB>lemma<TAB>tags` rows
    (tags comma-separated). Every (lemma, tags) pair maps to exactly one
    surface, so analyze and inflect are mutually inverse on the lexicon."""

    def __init__(self, rows: list[tuple[str, str, frozenset[str]]]):
        self._analyses: dict[str, set[Analysis]] = {}
        self._surfaces: dict[tuple[str, frozenset[str]], str] = {}
        for surface, lemma, tags in rows:
            analysis = Analysis(lemma, tags)
            if analysis in self._analyses.get(surface, set()):
                raise ValueError(f"duplicate analysis for surface {surface!r}: {analysis}")
            key = (lemma, tags)
            if key in self._surfaces and self._surfaces[key] != surface:
                raise ValueError(
                    f"(lemma, tags) not unique: {analysis} maps to both "
                    f"{self._surfaces[key]!r} and {surface!r}"
                )
            self._analyses.setdefault(surface, set()).add(analysis)
            self._surfaces[key] = surface

    def analyze(self, token: str) -> set[Analysis]:
        return set(self._analyses.get(token.lower(), set()))

    def inflect(self, lemma: str, tags: frozenset[str]) -> str | None:
        return self._surfaces.get((lemma, frozenset(tags)))

    def lemmatize(self, token: str) -> str:
        found = self.analyze(token)
        if not found:
            return token.lower()
        return min(found, key=analysis_key).lemma

    def surfaces(self) -> list[str]:
        return sorted(self._analyses)

    @classmethod
    def from_lines(cls, lines: list[str], origin: str = "<memory>") -> "ToyLexicon":
        rows = []
        for number, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{origin}:{number}: expected surface<TAB>lemma<TAB>tags")
            surface, lemma, tags = parts
            if not surface or not lemma or not tags:
                raise ValueError(f"{origin}:{number}: empty field")
            rows.append((surface.lower(), lemma.lower(), frozenset(tags.split(","))))
        return cls(rows)

    @classmethod
    def from_file(cls, path: str | Path) -> "ToyLexicon":
        path = Path(path)
        return cls.from_lines(path.read_text(encoding="utf-8").splitlines(), origin=str(path))

    @classmethod
    def bundled(cls) -> "ToyLexicon":
        text = resources.files("ctxnmt").joinpath("resources/toy_lexicon.tsv").read_text("utf-8")
        return cls.from_lines(text.splitlines(), origin="toy_lexicon.tsv")
