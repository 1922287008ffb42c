"""Embedding, chat-completion and rerank providers.

Every provider kind has a remote client speaking a common wire format
(OpenAI-compatible embeddings and chat completions, Cohere-compatible rerank)
and a deterministic offline implementation that never touches the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import httpx
import numpy as np

from .errors import DimensionDrift, EmptyInput, HttpError, ProviderTimeout

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5
    max_backoff: float = 8.0

    def delay(self, attempt: int) -> float:
        """Sleep before retry number ``attempt`` (1-based): exponential, capped."""
        return min(self.max_backoff, self.base_backoff * (2 ** (attempt - 1)))


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # embedding | llm | rerank
    mode: str = "offline"  # offline | remote
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env_var: str = ""
    timeout: float = 30.0
    batch_size: int = 64
    parallelism: int = 4
    temperature: float = 0.0
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    # offline embedder knobs
    dim: int = 256
    seed: int = 0
    ngram_n: int = 3

    def __post_init__(self):
        if self.kind not in ("embedding", "llm", "rerank"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.mode not in ("offline", "remote"):
            raise ValueError(f"unknown provider mode {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retry.max_attempts < 1:
            raise ValueError("retry.max_attempts must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderConfig":
        d = dict(d)
        if isinstance(d.get("retry"), dict):
            d["retry"] = RetryPolicy(**d["retry"])
        return cls(**d)


# --------------------------------------------------------------------------- #
# HTTP plumbing

class TranscriptTransport(httpx.BaseTransport):
    """Wraps a transport and appends every request/response pair to a JSON-lines file."""

    def __init__(self, inner: httpx.BaseTransport, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        response = self.inner.handle_request(request)
        response.read()
        body = request.content.decode("utf-8") if request.content else ""
        record = {
            "method": request.method,
            "url": str(request.url),
            "request": json.loads(body) if body else None,
            "status": response.status_code,
            "response": response.text,
        }
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        return response


class ReplayTransport(httpx.BaseTransport):
    """Serves responses recorded by :class:`TranscriptTransport`, in order."""

    def __init__(self, path: str | Path):
        with open(path, encoding="utf-8") as fh:
            self._records = [json.loads(line) for line in fh if line.strip()]
        self._pos = 0
        self._lock = threading.Lock()

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        with self._lock:
            if self._pos >= len(self._records):
                raise httpx.ConnectError("transcript exhausted", request=request)
            rec = self._records[self._pos]
            self._pos += 1
        return httpx.Response(rec["status"], text=rec["response"], request=request)


class JsonHttpClient:
    """POSTs JSON with timeout and capped exponential-backoff retries.

    The API key is read from the configured environment variable on each
    call and only ever placed in the Authorization header.
    """

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if not config.endpoint_url:
            raise ValueError(f"{config.kind} provider in remote mode needs endpoint_url")
        self.config = config
        self._sleep = sleep
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self.delays: list[float] = []

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env_var:
            key = os.environ.get(self.config.api_key_env_var)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def post(self, payload: dict) -> dict:
        retry = self.config.retry
        last: Exception | None = None
        for attempt in range(1, retry.max_attempts + 1):
            if attempt > 1:
                delay = retry.delay(attempt - 1)
                self.delays.append(delay)
                self._sleep(delay)
            try:
                resp = self._client.post(self.config.endpoint_url, json=payload, headers=self._headers())
            except httpx.TimeoutException as exc:
                last = ProviderTimeout(f"{self.config.kind} request timed out after {self.config.timeout}s")
                last.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                last = HttpError(f"{self.config.kind} transport error: {exc.__class__.__name__}")
                last.__cause__ = exc
                continue
            if 200 <= resp.status_code < 300:
                try:
                    return resp.json()
                except ValueError as exc:
                    raise HttpError(f"{self.config.kind} returned non-JSON body", resp.status_code) from exc
            last = HttpError(f"{self.config.kind} endpoint returned HTTP {resp.status_code}", resp.status_code)
            if resp.status_code < 500 and resp.status_code not in (408, 429):
                break
        assert last is not None
        raise last

    def close(self) -> None:
        self._client.close()


# --------------------------------------------------------------------------- #
# embeddings

def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("provider returned a zero vector")
    return mat / norms


class OfflineEmbedder:
    """Hashed character n-grams folded onto ``dim`` axes with seeded random signs."""

    offline = True

    def __init__(self, dim: int = 256, seed: int = 0, ngram_n: int = 3, batch_size: int = 64):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        if ngram_n < 1:
            raise ValueError("ngram_n must be >= 1")
        self.dim = dim
        self.seed = seed
        self.ngram_n = ngram_n
        self.batch_size = batch_size

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise EmptyInput("cannot embed empty text")
        norm = " " + " ".join(text.casefold().split()) + " "
        codes = np.frombuffer(norm.encode("utf-32-le"), dtype=np.uint32).astype(np.uint64)
        n = self.ngram_n
        if codes.shape[0] < n:
            codes = np.concatenate([codes, np.full(n - codes.shape[0], 32, dtype=np.uint64)])
        windows = codes.shape[0] - n + 1
        h = np.zeros(windows, dtype=np.uint64)
        with np.errstate(over="ignore"):
            for j in range(n):
                h = h * np.uint64(1_000_003) + codes[j:j + windows]
        h = _splitmix64(h ^ _splitmix64(np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)))
        axes = (h % np.uint64(self.dim)).astype(np.int64)
        signs = np.where((h >> np.uint64(63)) == 1, -1.0, 1.0)
        vec = np.bincount(axes, weights=signs, minlength=self.dim)
        nrm = np.linalg.norm(vec)
        if nrm == 0.0:
            # every n-gram cancelled out; fall back to the unsigned histogram
            vec = np.bincount(axes, minlength=self.dim).astype(np.float64)
            nrm = np.linalg.norm(vec)
        return vec / nrm

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise EmptyInput("no texts to embed")
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """OpenAI-compatible ``POST {model, input: [...]}`` -> ``{data: [{embedding}]}``."""

    offline = False

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.batch_size = config.batch_size
        self.http = JsonHttpClient(config, transport, sleep)
        self.dim: int | None = None

    def _request(self, batch: list[str]) -> np.ndarray:
        body = self.http.post({"model": self.config.model_name, "input": batch})
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            raise HttpError("embedding response has wrong number of items")
        if all("index" in item for item in data):
            data = sorted(data, key=lambda item: item["index"])
        vecs = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
        dims = {v.shape[0] for v in vecs}
        if len(dims) != 1:
            raise DimensionDrift(f"embedding batch has mixed dims {sorted(dims)}")
        usage = body.get("usage") or {}
        log.info("embedding call: %d inputs, %s tokens", len(batch), usage.get("total_tokens", "?"))
        return np.vstack(vecs)

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise EmptyInput("no texts to embed")
        if any(not t or not t.strip() for t in texts):
            raise EmptyInput("cannot embed empty text")
        batches = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        workers = max(1, min(self.config.parallelism, len(batches)))
        if workers == 1:
            results = [self._request(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(self._request, batches))
        dims = {r.shape[1] for r in results}
        if self.dim is not None:
            dims.add(self.dim)
        if len(dims) != 1:
            raise DimensionDrift(f"embedding provider returned dims {sorted(dims)}")
        self.dim = dims.pop()
        out = _normalize_rows(np.vstack(results))
        return list(out)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


def embed_batch(texts: list[str], provider) -> list[np.ndarray]:
    return provider.embed_batch(texts)


def offline_embed(text: str, dim: int = 256, seed: int = 0, ngram_n: int = 3) -> np.ndarray:
    return OfflineEmbedder(dim, seed, ngram_n).embed(text)


# --------------------------------------------------------------------------- #
# chat completion

_CONTEXT_LINE = re.compile(r"^\[(\d+)\] (.+)$", re.MULTILINE)
_QUESTION_LINE = re.compile(r"^Question: (.+)$", re.MULTILINE)


class OfflineExtractiveLLM:
    """Answers by quoting, from each of the top context snippets, the sentence
    sharing the most non-stopwords with the question.

    Context entries are lines of the form ``[i] text`` in the prompt and the
    question is the ``Question:`` line. Each quoted sentence is followed by its
    marker, e.g. ``"The rent is due monthly. [1]"``. Snippets after the first are
    quoted only when they share at least one word with the question.
    """

    offline = True

    def __init__(self, n_snippets: int = 3):
        self.n_snippets = n_snippets

    def complete(self, prompt: str) -> str:
        from .ingest import content_tokens, stopwords
        from .verify import split_sentences

        if not prompt or not prompt.strip():
            raise EmptyInput("empty prompt")
        entries: dict[int, str] = {}
        for m in _CONTEXT_LINE.finditer(prompt):
            entries.setdefault(int(m.group(1)), m.group(2).strip())
        q = _QUESTION_LINE.search(prompt)
        qterms = set(content_tokens(q.group(1))) - stopwords() if q else set()
        parts = []
        for rank, idx in enumerate(sorted(entries)[: self.n_snippets]):
            sentences = split_sentences(entries[idx])
            if not sentences:
                continue
            overlaps = [len(qterms.intersection(content_tokens(s))) for s in sentences]
            best = max(range(len(sentences)), key=lambda i: (overlaps[i], -i))
            if rank > 0 and overlaps[best] == 0:
                continue
            parts.append(f"{sentences[best]} [{idx}]")
        return " ".join(parts)


class RemoteLLM:
    """Chat-completions-compatible client (single user message)."""

    offline = False

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.http = JsonHttpClient(config, transport, sleep)

    def complete(self, prompt: str) -> str:
        if not prompt or not prompt.strip():
            raise EmptyInput("empty prompt")
        body = self.http.post({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        })
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise HttpError("chat response lacks choices[0].message.content") from exc
        usage = body.get("usage") or {}
        log.info("llm call: prompt_tokens=%s completion_tokens=%s",
                 usage.get("prompt_tokens", "?"), usage.get("completion_tokens", "?"))
        return text or ""


def llm_complete(prompt: str, provider) -> str:
    return provider.complete(prompt)


# --------------------------------------------------------------------------- #
# rerank

class OfflineLexicalReranker:
    """Scores each document by token-LCS coverage of the query."""

    offline = True

    def rerank(self, query: str, documents: list[str], top_n: int) -> list[tuple[int, float]]:
        from .verify import support_score

        if not documents:
            raise EmptyInput("no documents to rerank")
        if top_n > len(documents):
            raise ValueError("top_n exceeds number of documents")
        scored = [(i, support_score(query, doc)) for i, doc in enumerate(documents)]
        scored.sort(key=lambda p: (-p[1], p[0]))
        return scored[:top_n]


class RemoteReranker:
    """Cohere-compatible ``{query, documents, top_n}`` -> ``{results: [{index, relevance_score}]}``."""

    offline = False

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.http = JsonHttpClient(config, transport, sleep)

    def rerank(self, query: str, documents: list[str], top_n: int) -> list[tuple[int, float]]:
        if not documents:
            raise EmptyInput("no documents to rerank")
        if top_n > len(documents):
            raise ValueError("top_n exceeds number of documents")
        payload = {"query": query, "documents": documents, "top_n": top_n}
        if self.config.model_name:
            payload["model"] = self.config.model_name
        body = self.http.post(payload)
        try:
            results = [(int(r["index"]), float(r["relevance_score"])) for r in body["results"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise HttpError("rerank response lacks results[].index/relevance_score") from exc
        if any(not 0 <= i < len(documents) for i, _ in results):
            raise HttpError("rerank response references an unknown document index")
        results.sort(key=lambda p: (-p[1], p[0]))
        return results[:top_n]


def rerank_call(query: str, documents: list[str], top_n: int, provider) -> list[tuple[int, float]]:
    return provider.rerank(query, documents, top_n)


# --------------------------------------------------------------------------- #

def build_provider(config: ProviderConfig, transport: httpx.BaseTransport | None = None):
    if config.mode == "offline":
        if config.kind == "embedding":
            return OfflineEmbedder(config.dim, config.seed, config.ngram_n, config.batch_size)
        if config.kind == "llm":
            return OfflineExtractiveLLM()
        return OfflineLexicalReranker()
    cls = {"embedding": RemoteEmbedder, "llm": RemoteLLM, "rerank": RemoteReranker}[config.kind]
    return cls(config, transport)


def text_fingerprint(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
