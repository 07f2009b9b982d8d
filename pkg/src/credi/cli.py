"""Command-line driver: ``credi <subcommand> [--config FILE] [--section-key VALUE ...]``.

Exit codes: 0 ok, 2 IO, 3 schema/validation, 4 config, 5 backend.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from credi import __version__
from credi.config import EXAMPLE_CONFIG, PipelineConfig, add_config_flags, config_from_args
from credi.corpus import (
    Dataset,
    Dimension,
    RelationInstance,
    anonymize_names,
    balance_labels,
    dataset_stats,
    export_finetune_file,
    load_dataset,
    save_dataset,
    split_dataset,
)
from credi.dialogue import segment_dialogue_chains, speaker_counts
from credi.errors import ConfigError, CrediError, EmbedderFailure, SchemaError
from credi.estimator import RelationExtractor
from credi.evaluation import AblationTable, evaluate, run_ablation
from credi.inference import (
    MOCK_LOOKUP,
    PredictionRecord,
    make_backend,
    merge_predictions,
    parse_records,
    predict_batch,
)
from credi.network import build_network, export_network, load_roles
from credi.prompting import render_answer
from credi.retrieval import build_index

logger = logging.getLogger("credi")

EXIT_OK = 0
EXIT_IO = 2
EXIT_SCHEMA = 3
EXIT_CONFIG = 4
EXIT_BACKEND = 5


class BackendFailure(Exception):
    """Raised after artifacts are written when some predictions failed."""


# ---------------------------------------------------------------- helpers


def _write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_jsonl(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _read_roster(path: str | None) -> list[str]:
    if not path:
        raise ConfigError("paths.roster is required (one character name per line)")
    text = Path(path).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


def _load_corpus(cfg: PipelineConfig) -> Dataset:
    return load_dataset(cfg.paths.corpus)


def _lookup_table(cfg: PipelineConfig, ds: Dataset) -> dict[str, str] | None:
    if cfg.backend.kind != MOCK_LOOKUP:
        return None
    if cfg.paths.lookup:
        data = json.loads(Path(cfg.paths.lookup).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise SchemaError(0, "lookup", "expected a JSON object {instance_id: completion}")
        return {str(k): str(v) for k, v in data.items()}
    # default: echo gold answers, the oracle backend
    return {inst.id: render_answer(inst.gold) for inst in ds.instances if inst.gold is not None}


def _predict(extractor: RelationExtractor, test: Dataset, cfg: PipelineConfig):
    prompts = extractor.build_prompts(test)
    records = parse_records(predict_batch(extractor.backend, prompts, cfg.backend_config()))
    return prompts, records


def _extractor(cfg: PipelineConfig, backend, mode: str, variant: str, k: int) -> RelationExtractor:
    return RelationExtractor(
        backend=backend, embedder=cfg.embedder_spec().build(), mode=mode, dialogue_variant=variant,
        n_exemplars=k, locale=cfg.prompt.locale, exclude_self=cfg.retrieval.exclude_self,
        backend_config=cfg.backend_config(), templates=cfg.templates(),
    )


def _prepare(cfg: PipelineConfig, ds: Dataset) -> Dataset:
    if cfg.balance.enabled:
        ds = balance_labels(ds, Dimension(cfg.balance.dimension), cfg.balance.min_count,
                            cfg.balance.max_count, cfg.require_seed("balance"))
    return ds


def _load_predictions(path: Path) -> list[PredictionRecord]:
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(PredictionRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise SchemaError(lineno, "prediction", str(exc)) from None
    return parse_records(records)


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: PipelineConfig, args) -> int:
    """Segment every ``*.txt`` under ``paths.novels`` into dialogue units."""
    roster = _read_roster(cfg.paths.roster)
    seg_cfg = cfg.segmenter_config()
    novels_dir = Path(cfg.paths.novels)
    if not novels_dir.is_dir():
        raise FileNotFoundError(f"novel directory not found: {novels_dir}")
    units, instances, quote_total = [], [], 0
    for path in sorted(novels_dir.glob("*.txt")):
        raw = path.read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnicodeDecodeError(exc.encoding, exc.object, exc.start, exc.end,
                                     f"{path}: {exc.reason}") from None
        if not text.strip():
            continue
        result = segment_dialogue_chains(text, roster, seg_cfg, novel_id=path.stem)
        for w in result.warnings:
            logger.info("%s: %s at %d %s", path.name, w.kind, w.position, w.detail or "")
        for unit in result.units:
            units.append(unit)
            quote_total += len(unit.quotes)
            pairs = []
            for q in unit.quotes:
                if q.addressee and q.addressee != q.speaker and (q.speaker, q.addressee) not in pairs:
                    pairs.append((q.speaker, q.addressee))
            for j, (s, o) in enumerate(pairs, start=1):
                instances.append(RelationInstance(f"{unit.id}-r{j}", unit.id, s, o))
    ds = Dataset.build(units, instances, roster)
    save_dataset(ds, cfg.paths.corpus)
    print(f"units: {len(units)}  quotes: {quote_total}  instances: {len(instances)}  -> {cfg.paths.corpus}")
    return EXIT_OK


def cmd_split(cfg: PipelineConfig, args) -> int:
    ds = _prepare(cfg, _load_corpus(cfg))
    parts = split_dataset(ds, cfg.split_spec())
    out = cfg.workdir / "splits"
    for name, part in zip(("train", "val", "test"), parts):
        save_dataset(part, out / f"{name}.jsonl")
    print("train: {}  val: {}  test: {}  -> {}".format(*(len(p) for p in parts), out))
    return EXIT_OK


def cmd_index(cfg: PipelineConfig, args) -> int:
    """Embed every instance of ``paths.corpus`` (normally a training split)."""
    ds = _load_corpus(cfg)
    index = build_index(ds, cfg.prompt.dialogue_variant, cfg.embedder_spec().build(), cfg.prompt.locale)
    path = cfg.path("index", "index.json")
    index.save(path)
    print(f"indexed {len(index)} instances (dim {index.dim}) -> {path}")
    return EXIT_OK


def cmd_run(cfg: PipelineConfig, args) -> int:
    """Balance, split, anonymize, index, prompt, predict, evaluate; every stage leaves a file."""
    split_spec = cfg.split_spec()
    backend_cfg = cfg.backend_config()
    ds = _prepare(cfg, _load_corpus(cfg))
    # fail fast on configuration (e.g. missing API key) before touching any endpoint
    backend = make_backend(backend_cfg, _lookup_table(cfg, ds))
    prompt_cfg = cfg.prompt_config()

    work = cfg.workdir
    work.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    train, val, test = split_dataset(ds, split_spec)
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = work / "splits" / f"{name}.jsonl"
        save_dataset(part, path)
        artifacts[f"splits/{name}.jsonl"] = path

    if cfg.anonymize.enabled:
        train, name_map = anonymize_names(train, cfg.require_seed("anonymize"))
        artifacts["name_map.json"] = _write_json(work / "name_map.json", name_map)
        anon_path = work / "splits" / "train.anonymized.jsonl"
        save_dataset(train, anon_path)
        artifacts["splits/train.anonymized.jsonl"] = anon_path

    if not test.instances:
        raise CrediError("test split is empty; nothing to predict")
    extractor = _extractor(cfg, backend, prompt_cfg.mode, prompt_cfg.dialogue_variant, cfg.retrieval.k)
    extractor.fit(train)
    if extractor.index_ is not None:
        path = cfg.path("index", "index.json")
        extractor.index_.save(path)
        artifacts["index.json"] = path

    prompts, records = _predict(extractor, test, cfg)
    artifacts["prompts.jsonl"] = _write_jsonl(
        work / "prompts.jsonl",
        ({"instance_id": iid, "dimension": d.value if d else None, "prompt": text} for iid, text, d in prompts))
    pred_path = cfg.path("predictions", "predictions.jsonl")
    artifacts["predictions.jsonl"] = _write_jsonl(pred_path, (r.to_dict() for r in records))

    report = evaluate(test.instances, records)
    artifacts["report.json"] = _write_json(work / "report.json", report.to_dict())

    failed = [r.instance_id for r in records if r.error]
    manifest = {
        "version": __version__,
        "partial": bool(failed),
        "failed_instances": sorted(set(failed)),
        "split_sizes": {"train": len(train), "val": len(val), "test": len(test)},
        "config": {k: v for k, v in cfg.to_dict().items() if k != "paths"},
        "artifacts": {name: _sha256(p) for name, p in sorted(artifacts.items())},
    }
    _write_json(work / "run.json", manifest)
    print(report.format_table())
    if failed:
        raise BackendFailure(f"{len(failed)} prediction(s) failed; artifacts flagged partial in run.json")
    return EXIT_OK


def cmd_eval(cfg: PipelineConfig, args) -> int:
    """Score a predictions file against the gold labels in ``paths.corpus``."""
    ds = _load_corpus(cfg)
    records = _load_predictions(cfg.path("predictions", "predictions.jsonl"))
    wanted = {r.instance_id for r in records}
    instances = [inst for inst in ds.instances if inst.id in wanted]
    if not instances:
        raise CrediError("no corpus instance matches the predictions file")
    report = evaluate(instances, records)
    path = _write_json(cfg.workdir / "report.json", report.to_dict())
    print(report.format_table())
    print(f"report -> {path}")
    return EXIT_OK


def cmd_ablate(cfg: PipelineConfig, args) -> int:
    """Run every (mode, dialogue variant, shots) cell on the test split."""
    ds = _prepare(cfg, _load_corpus(cfg))
    backend = make_backend(cfg.backend_config(), _lookup_table(cfg, ds))
    train, _, test = split_dataset(ds, cfg.split_spec())
    if cfg.anonymize.enabled:
        train, _ = anonymize_names(train, cfg.require_seed("anonymize"))
    if not test.instances:
        raise CrediError("test split is empty; nothing to predict")

    def run_cell(mode: str, variant: str, k: int):
        extractor = _extractor(cfg, backend, mode, variant, k).fit(train)
        _, records = _predict(extractor, test, cfg)
        if any(r.error for r in records):
            raise BackendFailure(f"{sum(1 for r in records if r.error)} prediction(s) failed")
        return evaluate(test.instances, records)

    table = run_ablation(cfg.ablation_config(), run_cell)
    path = cfg.workdir / "ablation.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    table.save(path)
    print(table.format_table())
    print(f"ablation -> {path}")
    if any(c["status"] != "ok" for c in table.cells):
        raise BackendFailure("some ablation cells failed")
    return EXIT_OK


def network_inputs(cfg: PipelineConfig) -> tuple[list[RelationInstance], dict[str, int], dict[str, str]]:
    """Instances (predicted labels merged in when requested), quote counts and roles."""
    ds = _load_corpus(cfg)
    instances = list(ds.instances)
    if cfg.network.source == "predicted":
        pred_path = cfg.path("predictions", "predictions.jsonl")
        if pred_path.exists():
            merged = merge_predictions(_load_predictions(pred_path))
            instances = [RelationInstance(i.id, i.unit_id, i.subject, i.object, i.gold, merged[i.id])
                         for i in instances if i.id in merged]
        else:
            instances = [i for i in instances if i.predicted is not None]
    elif cfg.network.source != "gold":
        raise ConfigError(f"network.source must be gold or predicted, not {cfg.network.source!r}")
    if cfg.paths.quote_counts:
        quote_counts = {str(k): int(v) for k, v in
                        json.loads(Path(cfg.paths.quote_counts).read_text(encoding="utf-8")).items()}
    else:
        quote_counts = speaker_counts(ds.units.values())
    roles = load_roles(cfg.paths.roles) if cfg.paths.roles else {}
    return instances, quote_counts, roles


def cmd_network(cfg: PipelineConfig, args) -> int:
    instances, quote_counts, roles = network_inputs(cfg)
    net = build_network(instances, quote_counts, roles, source=cfg.network.source)
    out = cfg.path("network", "network")
    if not cfg.network.formats:
        raise ConfigError("network.formats is empty")
    ext = {"graphml": "graphml", "dot": "dot", "json": "json"}
    for fmt in cfg.network.formats:
        if fmt not in ext:
            raise ConfigError(f"unknown network format {fmt!r}")
        path = export_network(net, fmt, out / f"network.{ext[fmt]}")
        print(f"{fmt}: {len(net.nodes)} nodes, {len(net.edges)} edges -> {path}")
    return EXIT_OK


def cmd_stats(cfg: PipelineConfig, args) -> int:
    report = dataset_stats(_load_corpus(cfg))
    if args.json:
        print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    else:
        print(report.format_table())
    return EXIT_OK


def cmd_export_finetune(cfg: PipelineConfig, args) -> int:
    ds = _load_corpus(cfg)
    if cfg.anonymize.enabled:
        ds, _ = anonymize_names(ds, cfg.require_seed("anonymize"))
    path = cfg.path("finetune", "finetune.jsonl")
    n = export_finetune_file(ds, cfg.prompt_config(), path)
    print(f"wrote {n} records -> {path}")
    return EXIT_OK


def cmd_init_config(cfg: PipelineConfig, args) -> int:
    sys.stdout.write(EXAMPLE_CONFIG)
    return EXIT_OK


COMMANDS = {
    "ingest": (cmd_ingest, "segment novels into a corpus file"),
    "split": (cmd_split, "write seeded train/val/test splits"),
    "index": (cmd_index, "build the exemplar retrieval index"),
    "run": (cmd_run, "full pipeline: split, index, predict, evaluate"),
    "eval": (cmd_eval, "score a predictions file"),
    "ablate": (cmd_ablate, "run the prompt-mode x dialogue-variant grid"),
    "network": (cmd_network, "build and export the character network"),
    "stats": (cmd_stats, "print dataset statistics"),
    "export-finetune": (cmd_export_finetune, "write instruction-tuning JSONL"),
    "init-config": (cmd_init_config, "print a documented example configuration"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="credi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"credi {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        if name != "init-config":
            add_config_flags(p, aliases={"network.formats": ["--format"]} if name == "network" else None)
        if name == "stats":
            p.add_argument("--json", action="store_true", help="print JSON instead of a table")
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args) if args.command != "init-config" else PipelineConfig()
        return args.func(cfg, args)
    except UnicodeDecodeError as exc:
        print(f"error: invalid UTF-8 at byte {exc.start}: {exc.reason}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendFailure, EmbedderFailure) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CrediError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
