"""Citation grounding: per-sentence support scoring and the generate/verify/regenerate loop."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import EmptyAnswer, EmptySentence, InvalidCitation, NoSnippets
from .ingest import content_tokens
from .kernels import encode_tokens, lcs_length

REFUSAL_TEXT = "Insufficient evidence in the provided documents."

ABBREVIATIONS = frozenset("""
e.g. i.e. etc. vs. cf. al. approx. viz. Inc. Ltd. Co. Corp. LLC. L.L.C. Bros. No. Nos. Art. Sec. Para. para.
Fig. fig. Vol. vol. pp. p. Ch. ch. Mr. Mrs. Ms. Dr. Prof. Sr. Jr. St. Mt. Gen. Gov. Rep. Sen. Hon. Jan. Feb.
Mar. Apr. Jun. Jul. Aug. Sep. Sept. Oct. Nov. Dec. U.S. U.K. U.N. E.U. a.m. p.m. Ave. Dept. Est. est. Govt.
""".split())

_TERMINATOR = re.compile(r"[.!?]+[\"')”’]*(?:\s*\[\d+\])*")


@dataclass(frozen=True)
class SupportPolicy:
    threshold: float = 0.6
    max_rounds: int = 3
    strict: bool = False
    check_uncited_against_all: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


def _ends_with_abbreviation(text: str, dot: int) -> bool:
    start = dot
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:dot + 1].lstrip("(\"'“‘")
    return word in ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split after ., ! or ? when followed by whitespace + uppercase or by end of text.

    Closing quotes/parentheses and a trailing run of ``[i]`` citation markers
    stay with the sentence they follow. Known abbreviations never end a sentence.
    """
    out = []
    begin = 0
    n = len(text)
    for m in _TERMINATOR.finditer(text):
        end = m.end()
        nxt = end
        while nxt < n and text[nxt].isspace():
            nxt += 1
        if nxt < n and (nxt == end or not text[nxt].isupper()):
            continue
        first = m.start()
        if text[first] == "." and m.group().count(".") == 1 and _ends_with_abbreviation(text, first):
            continue
        piece = text[begin:end].strip()
        if piece:
            out.append(piece)
        begin = end
    tail = text[begin:].strip()
    if tail:
        out.append(tail)
    return out


def support_score(sentence: str, snippet_text: str) -> float:
    """Fraction of the sentence's tokens covered by its longest common token subsequence with the snippet.

    Case-insensitive; punctuation tokens are ignored on both sides.
    """
    sent = content_tokens(sentence)
    if not sent:
        raise EmptySentence("sentence has no word tokens")
    snip = content_tokens(snippet_text)
    if not snip:
        return 0.0
    a, b = encode_tokens(sent, snip)
    return lcs_length(a, b) / len(sent)


@dataclass
class SentenceVerdict:
    text: str
    best_support: float
    chunk_id: str | None
    passed: bool
    missing_citation: bool
    cited: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"text": self.text, "best_support": self.best_support, "cited": list(self.cited),
                "chunk_id": self.chunk_id, "pass": self.passed, "missing_citation": self.missing_citation}


@dataclass
class VerificationReport:
    verdicts: list[SentenceVerdict]
    rounds_used: int = 1
    empty: bool = False

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def unsupported_fraction(self) -> float:
        if not self.verdicts:
            return 0.0
        return sum(not v.passed for v in self.verdicts) / len(self.verdicts)

    def to_dict(self) -> dict:
        return {
            "sentences": [v.to_dict() for v in self.verdicts],
            "rounds_used": self.rounds_used,
            "all_pass": self.all_pass,
            "unsupported_fraction": self.unsupported_fraction,
            "empty": self.empty,
        }


def verify_draft(draft, snippets, policy: SupportPolicy = SupportPolicy()) -> VerificationReport:
    """Score every draft sentence against the snippets it cites.

    ``snippets`` is a sequence of objects with ``context_index``, ``chunk_id``
    and ``text``. Uncited sentences are checked against all snippets unless
    the policy is strict or disables that check; either way they are flagged.
    """
    by_index = {s.context_index: s for s in snippets}
    verdicts = []
    for sent in draft.sentences:
        cited = [i for i in sent.cited if i in by_index]
        if cited:
            pool = [by_index[i] for i in cited]
        elif policy.check_uncited_against_all and not policy.strict:
            pool = list(snippets)
        else:
            pool = []
        best, best_id = 0.0, None
        try:
            for snip in pool:
                score = support_score(sent.text, snip.text)
                if score > best or best_id is None:
                    best, best_id = score, snip.chunk_id
        except EmptySentence:
            best, best_id = 1.0, None
        verdicts.append(SentenceVerdict(sent.text, best, best_id, best >= policy.threshold,
                                        not sent.cited, list(sent.cited)))
    return VerificationReport(verdicts, empty=not verdicts)


@dataclass
class FinalAnswer:
    status: str  # grounded | best_effort | refused
    text: str
    report: VerificationReport
    citations: list[dict] = field(default_factory=list)
    selected_round: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "answer": self.text,
            "citations": self.citations,
            "report": self.report.to_dict(),
            "selected_round": self.selected_round,
        }


def _failed_report(note: str) -> VerificationReport:
    return VerificationReport([SentenceVerdict(note, 0.0, None, False, True)])


def _citations(report: VerificationReport) -> list[dict]:
    return [{"sentence": v.text, "chunk_id": v.chunk_id, "support": v.best_support, "cited": v.cited}
            for v in report.verdicts]


def grounded_answer_loop(refined_query, snippets, llm, spec=None, policy: SupportPolicy = SupportPolicy()) -> FinalAnswer:
    """Generate, verify and regenerate until every sentence is supported or rounds run out.

    Strict policies refuse with :data:`REFUSAL_TEXT` when rounds are exhausted
    (or when there is no evidence at all); otherwise the round with the lowest
    unsupported fraction is returned as best effort, later rounds winning ties.
    """
    from .generation import CoStarSpec, build_costar_prompt, corrective_directive, parse_answer

    spec = spec or CoStarSpec()
    if not snippets:
        if policy.strict:
            return FinalAnswer("refused", REFUSAL_TEXT, VerificationReport([], rounds_used=0, empty=True))
        raise NoSnippets("no snippets to answer from")

    rounds: list[tuple[str, VerificationReport]] = []
    directive = None
    for rnd in range(1, policy.max_rounds + 1):
        prompt = build_costar_prompt(refined_query, snippets, spec, strict=policy.strict, directive=directive)
        raw = llm.complete(prompt.text)
        kept = [s for s in snippets if s.context_index in prompt.manifest]
        try:
            draft = parse_answer(raw, prompt.manifest)
            report = verify_draft(draft, kept, policy)
        except InvalidCitation as exc:
            report = _failed_report(f"invalid citation: {exc}")
        except EmptyAnswer:
            report = _failed_report("empty answer")
        report.rounds_used = rnd
        rounds.append((raw, report))
        if report.all_pass and not report.empty:
            return FinalAnswer("grounded", raw.strip(), report, _citations(report), rnd)
        directive = corrective_directive([v.text for v in report.verdicts if not v.passed])

    if policy.strict:
        return FinalAnswer("refused", REFUSAL_TEXT, rounds[-1][1], [], len(rounds))
    pick = 0
    for i in range(1, len(rounds)):
        if rounds[i][1].unsupported_fraction <= rounds[pick][1].unsupported_fraction:
            pick = i
    best_raw, best = rounds[pick]
    best.rounds_used = len(rounds)
    return FinalAnswer("best_effort", best_raw.strip(), best, _citations(best), pick + 1)
