"""Engine configuration tree, stored as JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .index import Bm25Params, HnswParams
from .ingest import ChunkingPolicy
from .providers import ProviderConfig
from .retrieval import FusionPolicy
from .verify import SupportPolicy


@dataclass(frozen=True)
class PromptConfig:
    template_path: str | None = None
    max_context_tokens: int = 6000


@dataclass(frozen=True)
class EngineConfig:
    data_dir: str = "data"
    chunking: ChunkingPolicy = field(default_factory=ChunkingPolicy)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    hnsw: HnswParams = field(default_factory=HnswParams)
    fusion: FusionPolicy = field(default_factory=FusionPolicy)
    support: SupportPolicy = field(default_factory=SupportPolicy)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    embedding: ProviderConfig = field(default_factory=lambda: ProviderConfig("embedding"))
    llm: ProviderConfig = field(default_factory=lambda: ProviderConfig("llm"))
    rerank: ProviderConfig = field(default_factory=lambda: ProviderConfig("rerank"))
    redact_audit: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        simple = {"chunking": ChunkingPolicy, "bm25": Bm25Params, "hnsw": HnswParams, "fusion": FusionPolicy,
                  "support": SupportPolicy, "prompt": PromptConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in d.items():
            if key in simple:
                kwargs[key] = simple[key](**value)
            elif key in ("embedding", "llm", "rerank"):
                kwargs[key] = ProviderConfig.from_dict({"kind": key, **value})
            else:
                kwargs[key] = value
        return cls(**kwargs)

    @property
    def paths(self) -> "DataPaths":
        return DataPaths(Path(self.data_dir))

    def with_data_dir(self, data_dir: str | None) -> "EngineConfig":
        return self if data_dir is None else replace(self, data_dir=data_dir)


@dataclass(frozen=True)
class DataPaths:
    root: Path

    @property
    def chunks(self) -> Path:
        return self.root / "corpus" / "chunks.jsonl"

    @property
    def snapshot(self) -> Path:
        return self.root / "index" / "snapshot.drk"

    @property
    def index_lock(self) -> Path:
        return self.root / "index" / ".lock"

    @property
    def audit_log(self) -> Path:
        return self.root / "audit" / "audit.jsonl"

    @property
    def reports(self) -> Path:
        return self.root / "reports"


def load_config(path: str | Path) -> EngineConfig:
    """Read a config file; a relative data_dir resolves against the file's directory."""
    path = Path(path)
    cfg = EngineConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
    if not Path(cfg.data_dir).is_absolute():
        cfg = replace(cfg, data_dir=str((path.parent / cfg.data_dir).resolve()))
    return cfg


def save_config(config: EngineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
