"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 strict-mode refusal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from filelock import FileLock

from . import evaluation
from .audit import AuditEvent, append_audit, content_hash
from .config import EngineConfig, load_config, save_config
from .errors import GroundragError
from .generation import parse_answer
from .index import HybridIndex
from .ingest import ChunkingPolicy, ingest_manifest, read_chunks, write_chunks
from .pipeline import Engine, build_index
from .retrieval import Snippet
from .verify import SupportPolicy, verify_draft

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_REFUSED = 0, 1, 2, 3

log = logging.getLogger("groundrag")


def _config(args) -> EngineConfig:
    cfg = load_config(args.config) if args.config else EngineConfig()
    return cfg.with_data_dir(args.data_dir)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, indent=2) + "\n")


def cmd_ingest(args) -> int:
    cfg = _config(args)
    policy = cfg.chunking
    if args.chunk_tokens is not None or args.overlap_tokens is not None:
        policy = ChunkingPolicy(args.chunk_tokens or policy.chunk_tokens,
                                policy.overlap_tokens if args.overlap_tokens is None else args.overlap_tokens)
    docs, chunks = ingest_manifest(args.manifest, policy)
    paths = cfg.paths
    write_chunks(chunks, paths.chunks)
    append_audit(AuditEvent("ingest", detail={"documents": len(docs), "chunks": len(chunks)}), paths.audit_log)
    _emit({"documents": len(docs), "chunks": len(chunks), "chunk_store": str(paths.chunks)})
    return EXIT_OK


def cmd_index(args) -> int:
    cfg = _config(args)
    paths = cfg.paths
    chunks = read_chunks(paths.chunks)
    paths.snapshot.parent.mkdir(parents=True, exist_ok=True)
    with FileLock(str(paths.index_lock)):
        index = build_index(chunks, cfg)
        index.save(paths.snapshot)
    append_audit(AuditEvent("index", detail={"chunks": len(index), "dim": index.dim}), paths.audit_log)
    _emit({"chunks": len(index), "dim": index.dim, "snapshot": str(paths.snapshot)})
    return EXIT_OK


def cmd_ask(args) -> int:
    cfg = _config(args)
    paths = cfg.paths
    index = HybridIndex.load(paths.snapshot)
    engine = Engine(index, cfg)
    try:
        result = engine.ask(args.question, strict=True if args.strict else None)
    except GroundragError as exc:
        append_audit(AuditEvent("answer", status="error", query_hash=content_hash(args.question),
                                detail={"error": exc.__class__.__name__}), paths.audit_log)
        raise
    answer = result.answer
    detail = {} if cfg.redact_audit else {"question": args.question, "answer": answer.text}
    snippet_ids = [s.chunk_id for s in result.snippets]
    append_audit(AuditEvent("query", query_hash=content_hash(args.question), snippet_chunk_ids=snippet_ids),
                 paths.audit_log)
    append_audit(AuditEvent("answer", status=answer.status, query_hash=content_hash(args.question),
                            snippet_chunk_ids=snippet_ids, answer_hash=content_hash(answer.text),
                            detail={"rounds_used": answer.report.rounds_used, **detail}), paths.audit_log)
    _emit(result.to_dict())
    return EXIT_REFUSED if answer.status == "refused" else EXIT_OK


def _parse_k(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def cmd_eval(args) -> int:
    cfg = _config(args)
    per_query = []
    if args.run:
        per_query += evaluation.evaluate_runs(evaluation.read_runs(args.run), evaluation.read_qrels(args.qrels), args.k)
    if args.trace:
        per_query += evaluation.evaluate_traces(evaluation.read_traces(args.trace), cfg.support.threshold)
    report = evaluation.aggregate_report(per_query, args.k)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
    if args.audit:
        append_audit(AuditEvent("eval", detail={"queries": len(per_query)}), cfg.paths.audit_log)
    if args.table:
        sys.stdout.write(report.to_table())
    else:
        _emit(report.to_dict())
    return EXIT_OK


def cmd_verify_file(args) -> int:
    """Input: {"answer": str, "snippets": [str | {"chunk_id", "text"}], "threshold"?, "strict"?}."""
    payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    snippets = []
    for i, s in enumerate(payload["snippets"], 1):
        if isinstance(s, str):
            snippets.append(Snippet(f"snippet-{i}", s, 0.0, i))
        else:
            snippets.append(Snippet(s.get("chunk_id", f"snippet-{i}"), s["text"], 0.0, i))
    policy = SupportPolicy(threshold=payload.get("threshold", args.threshold), strict=bool(payload.get("strict", False)))
    draft = parse_answer(payload["answer"], {s.context_index: s.chunk_id for s in snippets})
    _emit(verify_draft(draft, snippets, policy).to_dict())
    return EXIT_OK


def cmd_init_config(args) -> int:
    cfg = EngineConfig() if args.data_dir is None else EngineConfig(data_dir=args.data_dir)
    save_config(cfg, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="engine config JSON")
    common.add_argument("--data-dir", help="override the config's data directory")

    parser = argparse.ArgumentParser(prog="groundrag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="manifest -> chunk store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--chunk-tokens", type=int)
    p.add_argument("--overlap-tokens", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", parents=[common], help="chunk store -> index snapshot")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("ask", parents=[common], help="answer a question with citations")
    p.add_argument("--question", required=True)
    p.add_argument("--strict", action="store_true", help="strict grounding: refuse instead of best effort")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", parents=[common], help="Recall/Precision@k and TRACe metrics")
    p.add_argument("--run")
    p.add_argument("--qrels")
    p.add_argument("--trace")
    p.add_argument("--k", type=_parse_k, default=list(evaluation.DEFAULT_K_GRID))
    p.add_argument("--out", help="directory for report.json and report.txt")
    p.add_argument("--table", action="store_true", help="print the plain-text table instead of JSON")
    p.add_argument("--audit", action="store_true", help="record an eval event in the data dir's audit log")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-file", help="verify an answer against snippets from a JSON file")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=SupportPolicy().threshold)
    p.set_defaults(func=cmd_verify_file)

    p = sub.add_parser("init-config", help="write the default config")
    p.add_argument("--output", required=True)
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_init_config)
    return parser


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.command == "eval" and not (args.trace or (args.run and args.qrels)):
        parser.print_usage(sys.stderr)
        sys.stderr.write("groundrag eval: error: give --run with --qrels, and/or --trace\n")
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GroundragError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"groundrag {args.command}: {exc.__class__.__name__}: {exc}\n")
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
