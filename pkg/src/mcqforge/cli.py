"""forge: one entry point driving every pipeline stage.

Usage errors exit 2 (argparse); stage failures exit 1 after printing a
single "error: <Category>: <message>" line. File-producing stages drop
a provenance sidecar next to their output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import (
    ConfigError,
    config_digest,
    get_backend,
    load_config,
    write_provenance,
)
from .datamodel import Benchmark, read_jsonl, write_jsonl
from .decontam import DEFAULT_THRESHOLD, decontaminate
from .errors import ForgeError, IoError
from .evalharness import EvalConfig, EvalReport, evaluate, format_report
from .generator import (
    PromptTemplate,
    distill_reasoning,
    generate_benchmark,
    generate_mcqs,
    mine_nursing_subset,
)
from .mas import MasConfig, runtime_table, solve
from .merge import MergeSpec, dare_merge, load_npk, save_npk
from .taxonomy import bundled_taxonomy_path, load_taxonomy, summarize
from .datamodel import Corpus


def _load_taxonomy(args):
    path = getattr(args, "taxonomy", None) or bundled_taxonomy_path()
    return load_taxonomy(path)


def _template(args, default_name: str) -> PromptTemplate:
    custom = getattr(args, "template", None)
    if custom:
        try:
            body = Path(custom).read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot read template {custom}: {exc}") from exc
        return PromptTemplate(name=Path(custom).stem, body=body)
    return PromptTemplate.from_file(default_name)


def _backend(args, cfg=None):
    if not args.config:
        raise ConfigError("this stage needs --config with a [backends] table")
    cfg = cfg if cfg is not None else load_config(args.config)
    backend_id = getattr(args, "backend", None)
    if not backend_id:
        raise ConfigError("this stage needs --backend <id>")
    return get_backend(cfg, backend_id, args.config)


def _seeds(args, **extra) -> dict:
    seeds = dict(extra)
    if getattr(args, "seed", None) is not None:
        seeds["seed"] = args.seed
    return seeds


def _limit(collection, n):
    if n is None or n >= len(collection):
        return collection
    cls = type(collection)
    return cls(name=collection.name, items=tuple(collection.items[:n]))


def cmd_taxonomy(args) -> int:
    taxonomy = _load_taxonomy(args)
    print(summarize(taxonomy).as_line())
    return 0


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    backend = _backend(args)
    taxonomy = _load_taxonomy(args)
    template = _template(args, "mcq_generation")
    paths = list(taxonomy)
    if args.limit_concepts is not None:
        paths = paths[: args.limit_concepts]

    items = []
    malformed = 0
    for path in paths:
        slot_items, stats = generate_mcqs(
            backend, path, args.per_concept, template
        )
        items.extend(slot_items)
        malformed += stats.malformed
    corpus = Corpus(name=Path(args.out).stem or "synthetic", items=tuple(items))
    write_jsonl(corpus, args.out)
    write_provenance(
        args.out, "generate",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args), backend_ids=[backend.id],
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
    )
    print(f"generated {len(items)} items over {len(paths)} concepts "
          f"({malformed} malformed replies)")
    return 0


def cmd_benchmark(args) -> int:
    t0 = time.perf_counter()
    backend = _backend(args)
    taxonomy = _load_taxonomy(args)
    if args.limit_concepts is not None:
        from .taxonomy import Taxonomy
        taxonomy = Taxonomy(
            paths=taxonomy.paths[: args.limit_concepts],
            source=taxonomy.source, digest=taxonomy.digest,
        )
    template = _template(args, "mcq_generation")
    bench = generate_benchmark(
        backend, taxonomy, template, checkpoint_path=args.checkpoint
    )
    write_jsonl(bench, args.out)
    write_provenance(
        args.out, "benchmark",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args), backend_ids=[backend.id],
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
    )
    print(f"benchmark of {len(bench)} items written to {args.out}")
    return 0


def cmd_mine(args) -> int:
    t0 = time.perf_counter()
    backend = _backend(args)
    source = _limit(read_jsonl(args.infile), args.limit)
    template = _template(args, "nursing_classifier")
    subset, stats = mine_nursing_subset(backend, source, template)
    write_jsonl(subset, args.out)
    write_provenance(
        args.out, "mine",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args), backend_ids=[backend.id],
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
    )
    print(f"kept {stats.kept}/{stats.total} items "
          f"({stats.unparsed} unparseable classifier replies)")
    return 0


def cmd_decontam(args) -> int:
    t0 = time.perf_counter()
    candidates = read_jsonl(args.infile)
    test_sets = [read_jsonl(p) for p in args.tests]
    kept, decisions = decontaminate(
        candidates, test_sets, threshold=args.threshold, strict=args.strict
    )
    write_jsonl(kept, args.out)
    lines = [json.dumps(d.to_record(), ensure_ascii=False) for d in decisions]
    try:
        Path(args.decisions).write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {args.decisions}: {exc}") from exc
    by_verdict = {}
    for d in decisions:
        by_verdict[d.verdict] = by_verdict.get(d.verdict, 0) + 1
    write_provenance(
        args.out, "decontam",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args),
        elapsed_s=time.perf_counter() - t0,
        outputs=[args.out, args.decisions],
        extra={"threshold": args.threshold, "verdicts": by_verdict},
    )
    print(f"kept {len(kept)}/{len(candidates.items)} "
          f"(rejected_testset={by_verdict.get('rejected_testset', 0)}, "
          f"rejected_pool={by_verdict.get('rejected_pool', 0)})")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    backend = _backend(args)
    bench = _limit(read_jsonl(args.bench), args.limit)
    report = evaluate(backend, bench, EvalConfig(backend_id=backend.id))
    report.save(args.out)
    write_provenance(
        args.out, "eval",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args), backend_ids=[backend.id],
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
    )
    print(f"{report.benchmark_name}: accuracy {100 * report.accuracy:.2f}% "
          f"({report.n_correct}/{report.n_total}, {report.n_unparsed} unparsed)")
    if args.table:
        text, _ = format_report([report], style=args.table)
        print(text, end="")
    return 0


def cmd_mas(args) -> int:
    t0 = time.perf_counter()
    if not args.config:
        raise ConfigError("mas needs --config with [backends] and [mas] tables")
    cfg = load_config(args.config)
    mas_cfg = cfg.get("mas", {})
    ids = {
        role: mas_cfg.get(role) or mas_cfg.get("backend")
        for role in ("orchestrator", "expert", "moderator")
    }
    for role, backend_id in ids.items():
        if not backend_id:
            raise ConfigError(f"[mas] table needs '{role}' (or a shared 'backend')")
    built = {}
    for role, backend_id in ids.items():
        if backend_id not in built:
            built[backend_id] = get_backend(cfg, backend_id, args.config)
    config = MasConfig(
        orchestrator=built[ids["orchestrator"]],
        expert=built[ids["expert"]],
        moderator=built[ids["moderator"]],
        k=int(mas_cfg.get("k", 5)),
        rounds=int(mas_cfg.get("rounds", 1)),
        baseline_s=float(mas_cfg.get("baseline_s", 5.6)),
    )

    bench = _limit(read_jsonl(args.bench), args.limit)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    n_correct = 0
    totals = {"easy": [], "hard": []}
    for item in bench:
        answer, transcript, ledger = solve(config, item)
        correct = answer == item.answer
        n_correct += int(correct)
        totals[transcript.difficulty].append(ledger.total)
        lines.append(json.dumps(
            {
                "answer": answer,
                "correct": correct,
                "transcript": transcript.to_record(),
                "ledger": ledger.to_record(),
            },
            ensure_ascii=False,
        ))
    transcripts_path = out_dir / "transcripts.jsonl"
    try:
        transcripts_path.write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {transcripts_path}: {exc}") from exc

    rows = [("Single-LLM (baseline)", config.baseline_s, 1.0)]
    for difficulty in ("easy", "hard"):
        if totals[difficulty]:
            mean = sum(totals[difficulty]) / len(totals[difficulty])
            rows.append(
                (f"MAS ({difficulty})", mean, mean / config.baseline_s)
            )
    write_provenance(
        out_dir, "mas",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args),
        backend_ids=sorted(built),
        elapsed_s=time.perf_counter() - t0,
        outputs=[str(transcripts_path)],
    )
    print(f"answered {len(bench)} questions, accuracy "
          f"{100 * n_correct / len(bench):.2f}%")
    print(runtime_table(rows), end="")
    return 0


def cmd_distill(args) -> int:
    t0 = time.perf_counter()
    backend = _backend(args)
    corpus = _limit(read_jsonl(args.infile), args.limit)
    template = _template(args, "reasoning_distill")
    kept, stats = distill_reasoning(backend, corpus, template)
    lines = [json.dumps(s.to_record(), ensure_ascii=False) for s in kept]
    try:
        Path(args.out).write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {args.out}: {exc}") from exc
    write_provenance(
        args.out, "distill",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args), backend_ids=[backend.id],
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
    )
    print(f"kept {stats.kept}/{stats.total} traces "
          f"(retention {100 * stats.retention:.2f}%)")
    return 0


def cmd_merge(args) -> int:
    t0 = time.perf_counter()
    base = load_npk(args.base)
    finetuned = load_npk(args.ft)
    spec = MergeSpec(drop_rate=args.p, weight=args.w, seed=args.seed or 0)
    merged = dare_merge(base, finetuned, spec)
    save_npk(merged, args.out)
    write_provenance(
        args.out, "merge",
        config_digest_hex=config_digest(args.config),
        seeds=_seeds(args, merge_seed=spec.seed),
        elapsed_s=time.perf_counter() - t0, outputs=[args.out],
        extra={"p": spec.drop_rate, "w": spec.weight},
    )
    print(f"merged {len(merged)} parameters into {args.out}")
    return 0


def cmd_report(args) -> int:
    t0 = time.perf_counter()
    reports = [EvalReport.load(p) for p in args.reports]
    text, record = format_report(reports, layout=args.layout, style=args.table)
    print(text, end="")
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {args.out}: {exc}") from exc
        write_provenance(
            args.out, "report",
            config_digest_hex=config_digest(args.config),
            seeds=_seeds(args),
            elapsed_s=time.perf_counter() - t0, outputs=[args.out],
            extra={"layout": record["layout"]},
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML pipeline config")
    common.add_argument("--seed", type=int, help="run seed recorded in provenance")
    common.add_argument("--workers", type=int, default=1,
                        help="worker width for parallel stages")

    parser = argparse.ArgumentParser(
        prog="forge", description="Nursing-MCQ pipeline toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("taxonomy", parents=[common],
                       help="count taxonomy levels")
    p.add_argument("--in", dest="taxonomy", help="taxonomy CSV (default: bundled)")
    p.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("generate", parents=[common],
                       help="generate synthetic MCQs per concept")
    p.add_argument("--backend", required=True)
    p.add_argument("--taxonomy", help="taxonomy CSV (default: bundled)")
    p.add_argument("--per-concept", type=int, default=1)
    p.add_argument("--limit-concepts", type=int)
    p.add_argument("--template", help="custom prompt template file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("benchmark", parents=[common],
                       help="one MCQ per concept, checkpointed")
    p.add_argument("--backend", required=True)
    p.add_argument("--taxonomy", help="taxonomy CSV (default: bundled)")
    p.add_argument("--limit-concepts", type=int)
    p.add_argument("--template", help="custom prompt template file")
    p.add_argument("--checkpoint", help="resumable JSONL checkpoint file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("mine", parents=[common],
                       help="keep nursing-relevant items of a benchmark")
    p.add_argument("--backend", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--template", help="custom classifier template file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("decontam", parents=[common],
                       help="two-step similarity filter against test sets")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--strict", action="store_true",
                   help="reject only above the threshold, not at it")
    p.add_argument("--tests", nargs="+", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--decisions", required=True)
    p.set_defaults(func=cmd_decontam)

    p = sub.add_parser("eval", parents=[common],
                       help="accuracy of a backend on a benchmark")
    p.add_argument("--backend", required=True)
    p.add_argument("--bench", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--table", choices=["md", "csv"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mas", parents=[common],
                       help="multi-agent debate over a benchmark")
    p.add_argument("--bench", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_mas)

    p = sub.add_parser("distill", parents=[common],
                       help="reasoning traces filtered by answer agreement")
    p.add_argument("--backend", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--template", help="custom distill template file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("merge", parents=[common],
                       help="DARE-merge two npk parameter maps")
    p.add_argument("--base", required=True)
    p.add_argument("--ft", required=True)
    p.add_argument("--p", type=float, default=0.5, help="drop rate")
    p.add_argument("--w", type=float, default=0.6, help="delta weight")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("report", parents=[common],
                       help="pivot eval reports into an accuracy table")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--layout", choices=["per_benchmark", "per_category"],
                   default="per_benchmark")
    p.add_argument("--table", choices=["md", "csv"], default="md")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
