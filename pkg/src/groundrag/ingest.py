"""Document loading, table-row serialization, tokenization and chunking."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path

from .errors import ArityMismatch, DecodeError, EmptyDocument, EmptyTable

FORMATS = ("plain", "markdown", "html", "table")

# A token is either a single non-word, non-space character or a run that starts
# and ends on a word character. Leading/trailing punctuation of a
# whitespace-delimited word therefore falls out one character per token, while
# interior punctuation ("1.2M", "don't") stays inside the word.
_TOKEN_RE = re.compile(r"\w(?:\S*\w)?|[^\w\s]")
_WORDCHAR_RE = re.compile(r"\w")


@dataclass(frozen=True)
class Document:
    doc_id: str
    source_uri: str
    format: str
    text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TokenSequence:
    """Token surfaces with [start, end) character spans into the source text."""

    surfaces: list[str]
    starts: list[int]
    ends: list[int]

    def __len__(self) -> int:
        return len(self.surfaces)

    def __iter__(self):
        return iter(zip(self.surfaces, zip(self.starts, self.ends)))


@dataclass(frozen=True)
class ChunkingPolicy:
    chunk_tokens: int = 1000
    overlap_tokens: int = 150

    def __post_init__(self):
        if self.chunk_tokens < 1:
            raise ValueError("chunk_tokens must be positive")
        if not 0 <= self.overlap_tokens < self.chunk_tokens:
            raise ValueError("overlap_tokens must satisfy 0 <= overlap < chunk_tokens")

    @property
    def stride(self) -> int:
        return self.chunk_tokens - self.overlap_tokens


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    seq_no: int
    token_span: tuple[int, int]
    char_span: tuple[int, int]
    text: str

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "seq_no": self.seq_no,
            "token_span": list(self.token_span),
            "char_span": list(self.char_span),
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(d["chunk_id"], d["doc_id"], int(d["seq_no"]), tuple(d["token_span"]), tuple(d["char_span"]), d["text"])


def tokenize(text: str) -> TokenSequence:
    surfaces, starts, ends = [], [], []
    for m in _TOKEN_RE.finditer(text):
        surfaces.append(m.group())
        starts.append(m.start())
        ends.append(m.end())
    return TokenSequence(surfaces, starts, ends)


def is_punct(token: str) -> bool:
    return _WORDCHAR_RE.search(token) is None


@lru_cache(maxsize=None)
def stopwords() -> frozenset[str]:
    text = resources.files("groundrag").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def content_tokens(text: str) -> list[str]:
    """Case-folded tokens with punctuation removed; the unit used for scoring."""
    return [t.casefold() for t in _TOKEN_RE.findall(text) if _WORDCHAR_RE.match(t)]


# --------------------------------------------------------------------------- #
# loading

_BLOCK_TAGS = frozenset(
    "address article aside blockquote br dd div dl dt fieldset figcaption figure footer form "
    "h1 h2 h3 h4 h5 h6 header hr li main nav ol p pre section table tbody thead tfoot td th tr ul".split()
)
_DROP_TAGS = frozenset(("script", "style", "head", "noscript", "template"))


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._drop_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _DROP_TAGS:
            self._drop_depth += 1
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_startendtag(self, tag, attrs):
        if tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in _DROP_TAGS:
            self._drop_depth = max(0, self._drop_depth - 1)
        elif tag in _BLOCK_TAGS:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._drop_depth:
            self.parts.append(data)


def _tidy_lines(text: str) -> str:
    lines = [" ".join(line.split()) for line in text.splitlines()]
    out: list[str] = []
    for line in lines:
        if line:
            out.append(line)
        elif out and out[-1] != "":
            out.append("")
    return "\n".join(out).strip()


def strip_html(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    parser.close()
    return _tidy_lines("".join(parser.parts))


_MD_FENCE = re.compile(r"^\s*(```|~~~).*$", re.MULTILINE)
_MD_HEADING = re.compile(r"^\s{0,3}#{1,6}\s*", re.MULTILINE)
_MD_QUOTE = re.compile(r"^\s{0,3}>\s?", re.MULTILINE)
_MD_LIST = re.compile(r"^(\s*)(?:[-*+]|\d+[.)])\s+", re.MULTILINE)
_MD_RULE = re.compile(r"^\s{0,3}([-*_])(?:\s*\1){2,}\s*$", re.MULTILINE)
_MD_IMAGE = re.compile(r"!\[([^\]]*)\]\([^)]*\)")
_MD_LINK = re.compile(r"\[([^\]]+)\]\([^)]*\)")
_MD_EMPH = re.compile(r"(\*\*|__|\*|_|~~)(?=\S)(.+?)(?<=\S)\1")
_MD_CODE = re.compile(r"`([^`]*)`")


def strip_markdown(md: str) -> str:
    text = _MD_FENCE.sub("", md)
    text = _MD_RULE.sub("", text)
    text = _MD_HEADING.sub("", text)
    text = _MD_QUOTE.sub("", text)
    text = _MD_LIST.sub(r"\1", text)
    text = _MD_IMAGE.sub(r"\1", text)
    text = _MD_LINK.sub(r"\1", text)
    text = _MD_CODE.sub(r"\1", text)
    text = _MD_EMPH.sub(r"\2", text)
    text = re.sub(r"<[^>]+>", "", text)
    return _tidy_lines(text)


def make_doc_id(source_uri: str, text: str) -> str:
    h = hashlib.sha256()
    h.update(source_uri.encode("utf-8"))
    h.update(b"\0")
    h.update(text.encode("utf-8"))
    return "doc-" + h.hexdigest()[:16]


def load_document(raw: bytes | str, format: str = "plain", source_uri: str = "", doc_id: str | None = None,
                  metadata: dict[str, str] | None = None) -> Document:
    """Decode raw bytes and normalise markup to plain text.

    ``table`` content is parsed as CSV and serialized row by row.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"{source_uri or '<bytes>'}: not valid UTF-8 ({exc.reason} at byte {exc.start})") from exc
    else:
        text = raw
    meta = dict(metadata or {})
    if format == "table":
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if any(cell.strip() for cell in r)]
        if not rows:
            raise EmptyDocument(f"{source_uri or '<input>'}: no text")
        doc = serialize_rows(rows[0], rows[1:], source_uri=source_uri)
        meta.update(doc.metadata)
        return Document(doc_id or doc.doc_id, source_uri, "table", doc.text, meta)
    if format == "html":
        text = strip_html(text)
    elif format == "markdown":
        text = strip_markdown(text)
    if not text.strip():
        raise EmptyDocument(f"{source_uri or '<input>'}: no text after stripping")
    meta.setdefault("format", format)
    meta.setdefault("source_uri", source_uri)
    return Document(doc_id or make_doc_id(source_uri, text), source_uri, format, text, meta)


def serialize_rows(header: list[str], rows: list[list[str]], template: str | None = None,
                   source_uri: str = "") -> Document:
    """Render each table row as one sentence.

    Default rendering is ``"col1: v1; col2: v2."``. A custom ``template`` is a
    ``str.format`` pattern over the column names, e.g. ``"{name} has ARR {arr}."``.
    """
    if not rows:
        raise EmptyTable("table has no data rows")
    header = [h.strip() for h in header]
    lines = []
    for n, row in enumerate(rows):
        if len(row) != len(header):
            raise ArityMismatch(f"row {n} has {len(row)} values, header has {len(header)} columns")
        values = [str(v).strip() for v in row]
        if template is None:
            lines.append("; ".join(f"{h}: {v}" for h, v in zip(header, values)) + ".")
        else:
            lines.append(template.format(**dict(zip(header, values))))
    text = "\n".join(lines)
    meta = {"format": "table", "source_uri": source_uri, "columns": ",".join(header)}
    return Document(make_doc_id(source_uri, text), source_uri, "table", text, meta)


# --------------------------------------------------------------------------- #
# chunking

def chunk_starts(n_tokens: int, policy: ChunkingPolicy) -> list[int]:
    if n_tokens == 0:
        return []
    starts = [0]
    while starts[-1] + policy.chunk_tokens < n_tokens:
        starts.append(starts[-1] + policy.stride)
    return starts


def make_chunk_id(doc_id: str, seq_no: int, char_span: tuple[int, int]) -> str:
    key = f"{doc_id}\x1f{seq_no}\x1f{char_span[0]}:{char_span[1]}"
    return "chk-" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:20]


def chunk_document(doc: Document, policy: ChunkingPolicy = ChunkingPolicy(),
                   tokens: TokenSequence | None = None) -> list[Chunk]:
    toks = tokens if tokens is not None else tokenize(doc.text)
    n = len(toks)
    chunks = []
    for seq_no, start in enumerate(chunk_starts(n, policy)):
        end = min(start + policy.chunk_tokens, n)
        span = (toks.starts[start], toks.ends[end - 1])
        chunks.append(Chunk(make_chunk_id(doc.doc_id, seq_no, span), doc.doc_id, seq_no,
                            (start, end), span, doc.text[span[0]:span[1]]))
    return chunks


# --------------------------------------------------------------------------- #
# manifests and stores

@dataclass(frozen=True)
class ManifestEntry:
    uri: str
    format: str = "plain"
    metadata: dict[str, str] = field(default_factory=dict)


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "uri" not in obj:
                raise ValueError(f"{path}:{lineno}: manifest entry lacks 'uri'")
            fmt = obj.get("format", "plain")
            if fmt == "csv":
                fmt = "table"
            entries.append(ManifestEntry(obj["uri"], fmt, {str(k): str(v) for k, v in obj.get("metadata", {}).items()}))
    return entries


def ingest_manifest(path: str | Path, policy: ChunkingPolicy = ChunkingPolicy()) -> tuple[list[Document], list[Chunk]]:
    """Load every source named in a JSON-lines manifest; relative uris resolve against the manifest."""
    base = Path(path).resolve().parent
    docs, chunks = [], []
    for entry in read_manifest(path):
        src = Path(entry.uri)
        if not src.is_absolute():
            src = base / src
        doc = load_document(src.read_bytes(), entry.format, entry.uri, metadata=entry.metadata)
        docs.append(doc)
        chunks.extend(chunk_document(doc, policy))
    return docs, chunks


def write_chunks(chunks: list[Chunk], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for c in chunks:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def read_chunks(path: str | Path) -> list[Chunk]:
    with open(path, encoding="utf-8") as fh:
        return [Chunk.from_dict(json.loads(line)) for line in fh if line.strip()]
