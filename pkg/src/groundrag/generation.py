"""CO-STAR prompt construction and parsing of cited drafts."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import BudgetTooSmall, EmptyAnswer, InvalidCitation, NoSnippets
from .ingest import content_tokens, tokenize
from .verify import split_sentences

SECTION_ORDER = ("CONTEXT", "OBJECTIVE", "STYLE", "TONE", "AUDIENCE", "RESPONSE")
_MARKER = re.compile(r"\[(\d+)\]")


@lru_cache(maxsize=None)
def _defaults() -> dict:
    return json.loads(resources.files("groundrag").joinpath("data/costar_v1.json").read_text("utf-8"))


@lru_cache(maxsize=None)
def _builtin_template() -> str:
    return resources.files("groundrag").joinpath("data/costar_v1.txt").read_text("utf-8")


def load_template(path: str | Path | None = None) -> str:
    if path is None:
        return _builtin_template()
    return Path(path).read_text(encoding="utf-8")


@dataclass(frozen=True)
class CoStarSpec:
    context_preamble: str = field(default_factory=lambda: _defaults()["context"])
    objective: str = field(default_factory=lambda: _defaults()["objective"])
    style: str = field(default_factory=lambda: _defaults()["style"])
    tone: str = field(default_factory=lambda: _defaults()["tone"])
    audience: str = field(default_factory=lambda: _defaults()["audience"])
    response_rules: str = field(default_factory=lambda: _defaults()["response"])
    max_context_tokens: int = 6000
    template_path: str | None = None

    def __post_init__(self):
        for name in ("context_preamble", "objective", "style", "tone", "audience", "response_rules"):
            if not getattr(self, name).strip():
                raise ValueError(f"CO-STAR section {name} is empty")
        if self.max_context_tokens < 1:
            raise ValueError("max_context_tokens must be positive")


@dataclass
class Prompt:
    text: str
    manifest: dict[int, str]  # context_index -> chunk_id


@dataclass
class DraftSentence:
    text: str
    cited: list[int]

    @property
    def missing_citation(self) -> bool:
        return not self.cited


@dataclass
class DraftAnswer:
    raw: str
    sentences: list[DraftSentence]


def _query_text(refined_query) -> str:
    return getattr(refined_query, "refined", refined_query)


def _snippet_line(snippet) -> str:
    return f"[{snippet.context_index}] " + " ".join(snippet.text.split())


def corrective_directive(failing: list[str]) -> str:
    d = _defaults()
    lines = [d["directive_header"]]
    lines += [f'- "{s}"' for s in failing]
    lines.append(d["directive_rule"])
    return "\n".join(lines)


def _render(template: str, query: str, lines: list[str], spec: CoStarSpec, response: str) -> str:
    return template.format_map({
        "context": spec.context_preamble,
        "objective": spec.objective,
        "style": spec.style,
        "tone": spec.tone,
        "audience": spec.audience,
        "response": response,
        "query": query,
        "snippets": "\n".join(lines),
    })


def build_costar_prompt(refined_query, snippets, spec: CoStarSpec = None, *, strict: bool = False,
                        directive: str | None = None) -> Prompt:
    """Render the six-section prompt, dropping lowest-ranked snippets whole to fit the token budget."""
    spec = spec or CoStarSpec()
    if not snippets:
        raise NoSnippets("cannot build a prompt without snippets")
    ordered = sorted(snippets, key=lambda s: s.context_index)
    template = load_template(spec.template_path)
    query = _query_text(refined_query)
    response = spec.response_rules
    if strict:
        response += "\n" + _defaults()["strict_rule"]
    if directive:
        response += "\n\n" + directive
    lines = [_snippet_line(s) for s in ordered]

    # Tokens never span a newline, so the rendered count is the base count plus each line's count.
    base = len(tokenize(_render(template, query, [], spec, response)))
    costs = [len(tokenize(line)) for line in lines]
    keep, total = 0, base
    for cost in costs:
        if total + cost > spec.max_context_tokens:
            break
        total += cost
        keep += 1
    while keep > 0:
        text = _render(template, query, lines[:keep], spec, response)
        if len(tokenize(text)) <= spec.max_context_tokens:
            return Prompt(text, {s.context_index: s.chunk_id for s in ordered[:keep]})
        keep -= 1
    raise BudgetTooSmall(f"max_context_tokens={spec.max_context_tokens} cannot fit a single snippet")


def parse_answer(raw: str, manifest) -> DraftAnswer:
    """Split a draft into sentences and attach each sentence's ``[i]`` markers.

    Markers are removed from sentence text. A marker-only fragment is folded
    into the preceding sentence; a punctuation-only fragment is dropped.
    """
    if raw is None or not raw.strip():
        raise EmptyAnswer("answer is empty")
    valid = set(manifest)
    sentences: list[DraftSentence] = []
    for piece in split_sentences(raw):
        cited = []
        for m in _MARKER.finditer(piece):
            idx = int(m.group(1))
            if idx not in valid:
                raise InvalidCitation(f"marker [{idx}] not among context indices {sorted(valid)}")
            if idx not in cited:
                cited.append(idx)
        text = " ".join(_MARKER.sub(" ", piece).split())
        text = re.sub(r"\s+([.!?,;:])", r"\1", text)
        if not content_tokens(text):
            if sentences:
                sentences[-1].cited.extend(i for i in cited if i not in sentences[-1].cited)
            continue
        sentences.append(DraftSentence(text, cited))
    if not sentences:
        raise EmptyAnswer("answer has no sentences with words")
    return DraftAnswer(raw, sentences)

