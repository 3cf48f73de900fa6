"""Command-line interface: validate, label, score, select, eval, curves, recall, demo.

Exit codes: 0 on success, 1 on validation failure, 2 on internal error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import RecordValidationError, ValidationError
from .evaluation import Criterion
from .pipeline import (
    curve_files,
    f4,
    format_eval_report,
    label_records,
    quantile_thresholds,
    recall_by_source,
    run_eval,
    score_records,
    selection_rows,
    sort_records,
    write_selection_csv,
)
from .records import RunConfig, validate_and_load


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RecordValidationError as exc:
        for violation in exc.violations:
            print(violation, file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary between library and shell
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selectqa",
        description="Selective QA: calibrate confidences, pick a knowledge source, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text, *, needs_input=True):
        cmd = sub.add_parser(name, help=help_text)
        cmd.set_defaults(handler=handler)
        if needs_input:
            cmd.add_argument("--input", required=True, help="prediction log (JSONL with header)")
        cmd.add_argument("--config", help="JSON run-config file (default: $SELECTQA_CONFIG)")
        cmd.add_argument("--criterion", choices=[c.value for c in Criterion])
        cmd.add_argument("--bins", type=int, help="equal-count bin count for ECE/reliability")
        cmd.add_argument("--no-length-norm", action="store_true",
                         help="use the raw token-probability product as the likelihood")
        cmd.add_argument("--seed", type=int, help="global seed for seeded stages")
        cmd.add_argument("--out", help="output file or directory")
        return cmd

    add("validate", _cmd_validate, "check a prediction log against the schema")
    add("label", _cmd_label, "compute answerability/consistency labels and targets")
    add("score", _cmd_score, "compute confidence breakdowns per record")
    add("select", _cmd_select, "pick a knowledge source per question")
    add("eval", _cmd_eval, "run the full selection evaluation report")
    add("curves", _cmd_curves, "emit risk-coverage and reliability curve CSVs")
    recall_cmd = add("recall", _cmd_recall, "retrieval recall@K from record contexts")
    recall_cmd.add_argument("--k", default="1,5,10", help="comma-separated K values")
    add("demo", _cmd_demo, "build the toy fixture and run the pipeline end to end",
        needs_input=False)
    return parser


def _config_from(args) -> RunConfig:
    config = RunConfig.default(args.config)
    if args.criterion:
        config.criterion = Criterion(args.criterion)
    if args.bins is not None:
        config.bins = args.bins
    if args.no_length_norm:
        config.length_normalize = False
    if args.seed is not None:
        config.global_seed = args.seed
    return config


def _cmd_validate(args) -> int:
    records = validate_and_load(args.input)
    by_source: dict[str, int] = {}
    for record in records:
        by_source[record.source.value] = by_source.get(record.source.value, 0) + 1
    detail = ", ".join(f"{count} {name}" for name, count in sorted(by_source.items()))
    print(f"OK: {len(records)} records ({detail or 'empty'})")
    return 0


def _cmd_label(args) -> int:
    config = _config_from(args)
    records = validate_and_load(args.input)
    thresholds = quantile_thresholds(records, config)
    labels = label_records(records, config, thresholds)
    lines = [
        json.dumps(
            {
                "id": item.id,
                "source": item.source.value,
                "answerability": item.answerability,
                "consistency": item.consistency,
                "consistency_bucket": item.consistency_bucket.value
                if item.consistency_bucket
                else None,
                "n_samples": item.n_samples,
                "target": item.target,
            },
            ensure_ascii=False,
        )
        for item in labels
    ]
    _emit_lines(lines, args.out)
    if thresholds is not None:
        print(f"thresholds: t1={f4(thresholds.t1)} t2={f4(thresholds.t2)}", file=sys.stderr)
    return 0


def _cmd_score(args) -> int:
    config = _config_from(args)
    records = validate_and_load(args.input)
    breakdowns = score_records(records, config)
    lines = []
    for record in sort_records(records):
        b = breakdowns[(record.id, record.source)]
        lines.append(
            json.dumps(
                {
                    "id": record.id,
                    "source": record.source.value,
                    "answer": record.answer,
                    "lm_likelihood": b.lm_likelihood,
                    "p_answerable": b.p_answerable,
                    "p_consistent": b.p_consistent,
                    "ensemble": b.ensemble,
                },
                ensure_ascii=False,
            )
        )
    _emit_lines(lines, args.out)
    return 0


def _cmd_select(args) -> int:
    config = _config_from(args)
    records = validate_and_load(args.input)
    rows = selection_rows(records, config)
    if args.out:
        write_selection_csv(rows, args.out)
    else:
        print("id,chosen_source,answer,correct")
        for qid, source, answer, correct in rows:
            print(f"{qid},{source},{answer},{str(correct).lower()}")
    return 0


def _cmd_eval(args) -> int:
    config = _config_from(args)
    records = validate_and_load(args.input)
    report, unpaired = run_eval(records, config)
    text = format_eval_report(report, unpaired, config)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def _cmd_curves(args) -> int:
    config = _config_from(args)
    records = validate_and_load(args.input)
    out_dir = args.out or "."
    for path in curve_files(records, config, out_dir):
        print(path)
    return 0


def _cmd_recall(args) -> int:
    records = validate_and_load(args.input)
    try:
        ks = sorted({int(k) for k in args.k.split(",") if k.strip()})
    except ValueError:
        raise ValidationError(f"--k must be comma-separated integers, got {args.k!r}") from None
    if not ks:
        raise ValidationError("--k must name at least one K value")
    table = recall_by_source(records, ks)
    for source in sorted(table):
        for k in ks:
            result = table[source][k]
            suffix = f" (questions short on contexts: {result.truncated})" if result.truncated else ""
            print(f"{source} recall@{k}: {f4(result.value)}{suffix}")
    return 0


def _cmd_demo(args) -> int:
    from .demo import run_demo

    config = _config_from(args)
    out_dir = args.out or "selectqa-demo"
    result = run_demo(out_dir, config)
    print(result.report_text, end="")
    print(f"files written to {result.out_dir}: {', '.join(result.files)}", file=sys.stderr)
    return 0


def _emit_lines(lines, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    else:
        for line in lines:
            print(line)


if __name__ == "__main__":
    sys.exit(main())
