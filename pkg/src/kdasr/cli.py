"""Command-line entry point: ``kdasr <subcommand> [options]``.

Heavy modules are imported inside the handlers so that ``--threads`` can set
the BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

SUBCOMMANDS = ("gen-corpus", "stats", "normalize", "score", "train-teacher", "pseudolabel", "filter",
               "init-student", "distill", "evaluate", "sweep", "scale", "error-report", "pipeline")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d, help="random seed (overrides the config file)")
    g.add_argument("--out", default=d, help="output file or directory")
    g.add_argument("--config", default=d, help="flat key = value config file")
    g.add_argument("--threads", type=int, default=d, help="BLAS threads")


def _lambda(text: str):
    return None if text.lower() == "none" else float(text)


def _csv(conv):
    def parse(text: str):
        return [conv(t.strip()) for t in text.split(",") if t.strip()]
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdasr", description="Pseudo-label filtering and distillation toolkit")
    _global_flags(p, suppress=False)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    sp = add("gen-corpus", "generate the synthetic corpus (manifests + frame sidecars)")

    sp = add("stats", "utterance/word statistics per dialect as TSV")
    sp.add_argument("--data", nargs="+", required=True, help="manifest files")

    sp = add("normalize", "normalize text line by line")
    sp.add_argument("--mode", default="norm-nd", help="ortho, norm or norm-nd")
    sp.add_argument("--in", dest="input", help="input file (default stdin)")
    sp.add_argument("--dump-rules", action="store_true", help="print the rule table and exit")

    sp = add("score", "pooled WER/CER of hypotheses against references")
    sp.add_argument("--refs", required=True, help="JSONL with id, reference, dataset")
    sp.add_argument("--hyps", required=True, help="JSONL with id, hypothesis")
    sp.add_argument("--mode", default="norm-nd", help="ortho, norm, norm-nd or all")
    sp.add_argument("--group", default="benchmark", choices=("benchmark", "in-house"))

    sp = add("train-teacher", "supervised teacher training on a generated corpus")
    sp.add_argument("--corpus", required=True, help="gen-corpus output directory")

    sp = add("pseudolabel", "greedy teacher transcripts with their WER")
    sp.add_argument("--teacher", required=True)
    sp.add_argument("--data", required=True, help="manifest")

    sp = add("filter", "keep segments with WER <= lambda")
    sp.add_argument("--segments", required=True)
    sp.add_argument("--lambda", dest="lam", type=_lambda, required=True, help="threshold or 'none'")

    sp = add("init-student", "student initialized from maximally spaced teacher layers")
    sp.add_argument("--teacher", required=True)
    sp.add_argument("--student-el", type=int, required=True)
    sp.add_argument("--student-dl", type=int, required=True)

    sp = add("distill", "train a student on filtered pseudo-labels")
    sp.add_argument("--teacher", required=True)
    sp.add_argument("--student-el", type=int, default=2)
    sp.add_argument("--student-dl", type=int, default=2)
    sp.add_argument("--student", help="initial student checkpoint (default: init from teacher)")
    sp.add_argument("--corpus", required=True, help="gen-corpus output directory")
    sp.add_argument("--segments", required=True, help="pseudo-label JSONL")

    sp = add("evaluate", "score a model on benchmark and in-house manifests")
    sp.add_argument("--model", required=True)
    sp.add_argument("--benchmark", nargs="*", default=[], help="benchmark manifests")
    sp.add_argument("--in-house", nargs="*", default=[], help="in-house (dialect) manifests")

    for name, help_ in (("sweep", "one distillation run per WER threshold"),
                        ("scale", "distillation on nested subsamples of the training set")):
        sp = add(name, help_)
        sp.add_argument("--teacher", required=True)
        sp.add_argument("--corpus", required=True)
        sp.add_argument("--student-el", type=int, default=2)
        sp.add_argument("--student-dl", type=int, default=2)
        sp.add_argument("--segments", help="reuse pseudo-labels instead of decoding the training set")
        if name == "sweep":
            sp.add_argument("--lambdas", type=_csv(_lambda), default=[10.0, 20.0, 40.0, 80.0, None])
        else:
            sp.add_argument("--sizes", type=_csv(int), required=True)

    sp = add("error-report", "automatic error flags and a review sample")
    sp.add_argument("--scores", required=True, help="JSONL with id, dialect, reference, hypothesis[, model]")
    sp.add_argument("--sample", type=int, default=20)
    sp.add_argument("--lexicon", help="one word per line; enables the gibberish check")

    add("pipeline", "run every stage end to end (resumable)")
    return p


# ---------------------------------------------------------------------------
# helpers


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _meta(args, config) -> None:
    """Write run.meta into the output directory, or next to the output file."""
    if args.out is None:
        return
    from .pipeline import write_run_meta
    out = Path(args.out)
    target = out if out.is_dir() or not out.suffix else out.parent
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    write_run_meta(target, args.command, {"args": resolved, "config": config}, args.seed)


def _read_jsonl(path: str) -> list[dict]:
    from .errors import SchemaViolation
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise SchemaViolation(str(exc), lineno) from exc
    return out


def _distill_config(args):
    from .distill import DistillConfig
    cfg = DistillConfig.from_file(args.config) if args.config else DistillConfig()
    return cfg.replace(seed=args.seed) if args.seed is not None else cfg


def _need_out(args) -> Path:
    if args.out is None:
        raise SystemExit(f"{args.command}: --out is required")
    return Path(args.out)


# ---------------------------------------------------------------------------
# handlers


def cmd_gen_corpus(args) -> int:
    from .data import SynthConfig, synth_corpus
    from .distill import parse_flat_config
    from .pipeline import write_corpus
    fields = parse_flat_config(Path(args.config).read_text(encoding="utf-8"), SynthConfig) if args.config else {}
    if args.seed is not None:
        fields["seed"] = args.seed
    cfg = SynthConfig(**fields)
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out, synth_corpus(cfg))
    _meta(args, cfg.to_dict())
    return 0


def cmd_stats(args) -> int:
    from .data import load_manifest, stats_table
    utts = [u for path in args.data for u in load_manifest(path)]
    _emit(stats_table(utts), args.out)
    _meta(args, {})
    return 0


def cmd_normalize(args) -> int:
    from .textnorm import dump_rules, normalize, parse_mode
    if args.dump_rules:
        _emit(dump_rules(), args.out)
        return 0
    mode = parse_mode(args.mode)
    if args.input:
        text = Path(args.input).read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    _emit("".join(normalize(line, mode) + "\n" for line in lines), args.out)
    _meta(args, {"mode": mode.value})
    return 0


def cmd_score(args) -> int:
    from .errors import LengthMismatch, SchemaViolation
    from .metrics import aggregate, score_corpus
    from .pipeline import report_jsonl
    from .textnorm import NormalizationMode, parse_mode
    refs = _read_jsonl(args.refs)
    hyps = {}
    for i, r in enumerate(_read_jsonl(args.hyps), 1):
        if "id" not in r or "hypothesis" not in r:
            raise SchemaViolation("hypothesis records need 'id' and 'hypothesis'", i)
        hyps[str(r["id"])] = r["hypothesis"]
    ref_ids = {str(r["id"]) for r in refs}
    if ref_ids != set(hyps):
        missing, extra = sorted(ref_ids - set(hyps)), sorted(set(hyps) - ref_ids)
        raise LengthMismatch(f"id sets differ: {len(missing)} without hypothesis, {len(extra)} without reference")
    modes = list(NormalizationMode) if args.mode == "all" else [parse_mode(args.mode)]
    by_ds: dict[str, list] = {}
    for r in refs:
        by_ds.setdefault(r.get("dataset", "data"), []).append((str(r["id"]), r["reference"], hyps[str(r["id"])]))
    entries = []
    for ds, triples in sorted(by_ds.items()):
        per_mode = {}
        for m in modes:
            per_mode[m], excluded = score_corpus(triples, m)
            if excluded:
                print(f"{ds}: excluded {len(excluded)} utterances with empty references ({m.value})",
                      file=sys.stderr)
        entries.append((ds, args.group, per_mode))
    report = aggregate(entries)
    if args.out is None:
        sys.stdout.write(report.to_tsv())
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
        (out / "report.jsonl").write_text(report_jsonl(report), encoding="utf-8")
        _meta(args, {"modes": [m.value for m in modes]})
    return 0


def cmd_train_teacher(args) -> int:
    from .data import SynthConfig, load_manifest
    from .distill import parse_flat_config
    from .errors import BudgetExhausted
    from .pipeline import TeacherConfig, log_jsonl, train_teacher
    from .vocab import Vocab
    fields = parse_flat_config(Path(args.config).read_text(encoding="utf-8"), TeacherConfig) if args.config else {}
    if args.seed is not None:
        fields["seed"] = args.seed
    cfg = TeacherConfig(**fields)
    corpus = Path(args.corpus)
    synth = SynthConfig.from_dict(json.loads((corpus / "synth.json").read_text(encoding="utf-8")))
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    code = 0
    try:
        _, log_ = train_teacher(load_manifest(corpus / "train.jsonl"), load_manifest(corpus / "dev.jsonl"),
                                Vocab(synth.symbols), synth.frame_dim, cfg, out / "teacher.ckpt")
    except BudgetExhausted as exc:
        print(f"train-teacher: {exc}; best checkpoint saved", file=sys.stderr)
        log_ = exc.log
        code = 3
    (out / "log.jsonl").write_text(log_jsonl(log_), encoding="utf-8")
    _meta(args, cfg.to_dict())
    return code


def cmd_pseudolabel(args) -> int:
    from .data import load_manifest
    from .distill import pseudo_label
    from .model import load_checkpoint
    segs = pseudo_label(load_checkpoint(args.teacher), load_manifest(args.data))
    _emit("".join(s.to_json() + "\n" for s in segs), args.out)
    _meta(args, {})
    return 0


def cmd_filter(args) -> int:
    from .distill import filter_by_wer, read_segments
    kept, frac = filter_by_wer(read_segments(args.segments), args.lam)
    _emit("".join(s.to_json() + "\n" for s in kept), args.out)
    print(f"kept {len(kept)} segments, retained fraction {frac:.4f}", file=sys.stderr)
    _meta(args, {"lambda": args.lam})
    return 0


def cmd_init_student(args) -> int:
    from .model import init_student, load_checkpoint, save_checkpoint
    teacher = load_checkpoint(args.teacher)
    template = teacher.config.replace(encoder_layers=args.student_el, decoder_layers=args.student_dl)
    out = _need_out(args)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(init_student(teacher, template), out)
    _meta(args, template.to_dict())
    return 0


def _corpus(path: str):
    from .data import SynthConfig, load_manifest
    from .pipeline import read_eval_sets
    d = Path(path)
    synth = SynthConfig.from_dict(json.loads((d / "synth.json").read_text(encoding="utf-8")))
    return load_manifest(d / "train.jsonl"), load_manifest(d / "dev.jsonl"), read_eval_sets(d, synth)


def cmd_distill(args) -> int:
    from .distill import filter_by_wer, read_segments, train_distill
    from .model import init_student, load_checkpoint, save_checkpoint
    from .pipeline import log_jsonl
    cfg = _distill_config(args)
    teacher = load_checkpoint(args.teacher)
    if args.student:
        student = load_checkpoint(args.student)
    else:
        template = teacher.config.replace(encoder_layers=args.student_el, decoder_layers=args.student_dl)
        student = init_student(teacher, template)
    train, dev, _ = _corpus(args.corpus)
    kept, frac = filter_by_wer(read_segments(args.segments), cfg.lambda_threshold)
    student, log_ = train_distill(teacher, student, train, kept, dev, cfg, frac)
    out = _need_out(args)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(student, out / "student.ckpt")
    (out / "log.jsonl").write_text(log_jsonl(log_), encoding="utf-8")
    _meta(args, cfg.to_dict())
    return 0


def cmd_evaluate(args) -> int:
    from .data import load_manifest
    from .distill import decode_texts
    from .metrics import aggregate, score_corpus
    from .model import load_checkpoint
    from .pipeline import report_jsonl
    from .textnorm import NormalizationMode
    model = load_checkpoint(args.model)
    if not args.benchmark and not args.in_house:
        raise SystemExit("evaluate: give at least one --benchmark or --in-house manifest")
    entries, records = [], []
    for group, paths in (("benchmark", args.benchmark), ("in-house", args.in_house)):
        for path in paths:
            utts = load_manifest(path)
            hyps = [model.vocab.decode(t) for t in decode_texts(model, utts)]
            triples = [(u.id, u.reference, h) for u, h in zip(utts, hyps)]
            name = utts[0].dataset if utts else Path(path).stem
            entries.append((name, group, {m: score_corpus(triples, m)[0] for m in NormalizationMode}))
            records += [{"id": u.id, "dataset": u.dataset, "dialect": u.dialect or u.dataset,
                         "reference": u.reference, "hypothesis": h, "model": Path(args.model).stem}
                        for u, h in zip(utts, hyps)]
    report = aggregate(entries)
    if args.out is None:
        sys.stdout.write(report.to_tsv())
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    (out / "report.jsonl").write_text(report_jsonl(report), encoding="utf-8")
    (out / "hypotheses.jsonl").write_text(
        "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records), encoding="utf-8")
    _meta(args, {})
    return 0


def _harness(args, run) -> int:
    from .distill import read_segments, results_tsv
    from .model import load_checkpoint
    cfg = _distill_config(args)
    teacher = load_checkpoint(args.teacher)
    template = teacher.config.replace(encoder_layers=args.student_el, decoder_layers=args.student_dl)
    train, dev, eval_sets = _corpus(args.corpus)
    segments = read_segments(args.segments) if args.segments else None
    key, results = run(teacher, template, train, dev, cfg, eval_sets, segments)
    _emit(results_tsv(results, key), args.out)
    _meta(args, cfg.to_dict())
    return 0


def cmd_sweep(args) -> int:
    from .distill import threshold_sweep
    return _harness(args, lambda t, tpl, tr, dv, cfg, ev, seg: (
        "lambda", threshold_sweep(t, tpl, tr, dv, cfg, args.lambdas, ev, seg)))


def cmd_scale(args) -> int:
    from .distill import data_scaling
    return _harness(args, lambda t, tpl, tr, dv, cfg, ev, seg: (
        "size", data_scaling(t, tpl, tr, dv, cfg, args.sizes, ev, seg)))


def cmd_error_report(args) -> int:
    from .analysis import ScoredRecord, error_report, flag_errors
    records = [ScoredRecord.from_dict(r) for r in _read_jsonl(args.scores)]
    lexicon = None
    if args.lexicon:
        lexicon = set(Path(args.lexicon).read_text(encoding="utf-8").split())
    flags = {(r.model, r.id): flag_errors(r.reference, r.hypothesis, lexicon) for r in records}
    report = error_report(records, flags, args.sample, args.seed or 0)
    if args.out is None:
        sys.stdout.write(report.to_tsv())
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "error_report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    (out / "review.jsonl").write_text(report.review_jsonl(), encoding="utf-8")
    _meta(args, {"sample": args.sample})
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline
    cfg = PipelineConfig.from_text(Path(args.config).read_text(encoding="utf-8")) if args.config \
        else PipelineConfig()
    if args.seed is not None:
        cfg.distill = cfg.distill.replace(seed=args.seed)
    report, pipe = run_pipeline(cfg, _need_out(args))
    for r in pipe.results:
        print(f"{r.name}\t{'skipped' if r.skipped else 'ran'}\t{r.directory}", file=sys.stderr)
    sys.stdout.write(report.to_tsv())
    return 0


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in SUBCOMMANDS}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    from .errors import KDError
    try:
        return HANDLERS[args.command](args)
    except KDError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
