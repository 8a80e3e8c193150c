"""Command-line entry point: ``l2s {run,metrics,keywords,compress-rate,simulate}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .errors import L2SError
from .pipeline import load_config, run_pipeline
from .simulator import surface_grid

log = logging.getLogger("l2smix")


def _emit_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args):
    config = load_config(args.config, seed=args.seed, static=args.static)
    runlog = run_pipeline(config)
    out = Path(args.out)
    runlog.write(out)
    s = runlog.summary()
    print(f"wrote {out} ({s['evaluations']} evaluations, mode={s['mode']}, seed={s['seed']})")
    print(
        "final: tokens={:.1f} accuracy={:.4f} averaged_alpha=({:.4f}, {:.4f}) objective={:.6g} checkpoint={}".format(
            s["final_report"]["mean_tokens"],
            s["final_report"]["mean_accuracy"],
            *s["averaged_alpha"],
            s["final_objective"],
            s["selected_checkpoint"],
        )
    )
    if args.plot_dir:
        from .plotting import plot_run

        d = Path(args.plot_dir)
        d.mkdir(parents=True, exist_ok=True)
        fig = plot_run([e.to_dict() for e in runlog.entries], d / f"{out.stem}.png", title=f"{s['mode']} run, seed {s['seed']}")
        print(f"wrote {fig}")
    return 0


def cmd_metrics(args):
    records = metrics.load_results(args.results, tokenizer=args.tokenizer)
    summaries = metrics.summarize(records)
    rows = [
        (s.dataset, s.n_questions, s.samples_per_question, metrics.pct(s.mean_accuracy), f"{s.mean_tokens:.1f}")
        for s in summaries.values()
    ]
    print(metrics.format_table(("dataset", "questions", "samples", "accuracy", "mean_tokens"), rows))
    if args.json:
        _emit_json({k: v.to_dict() for k, v in summaries.items()}, args.json)
    return 0


def cmd_keywords(args):
    records = metrics.load_results(args.results, tokenizer=args.tokenizer)
    groups: dict[str, list[str]] = {}
    for r in records:
        groups.setdefault(r.dataset if args.by_dataset else "all", []).append(r.output_text)
    profiles = {name: metrics.keyword_frequency(texts) for name, texts in sorted(groups.items())}
    header = ("group", "exploratory", "reflective", "checking") + metrics.KEYWORDS
    rows = []
    for name, p in profiles.items():
        c = p.counts
        rows.append((name, c["exploratory"], c["reflective"], c["checking"], *p.keywords.values()))
    print(metrics.format_table(header, rows))
    if args.json:
        _emit_json({k: v.to_dict() for k, v in profiles.items()}, args.json)
    return 0


def cmd_compress_rate(args):
    original = metrics.summarize(metrics.load_results(args.original, tokenizer=args.tokenizer))
    current = metrics.summarize(metrics.load_results(args.current, tokenizer=args.tokenizer))
    result = metrics.compare_runs(original, current)
    rows = []
    for r in result["datasets"]:
        na = r["normalized_accuracy"]
        rows.append(
            (
                r["dataset"],
                f"{r['tokens_original']:.1f}",
                f"{r['tokens_current']:.1f}",
                metrics.pct(r["compression_rate"]),
                f"{r['normalized_token']:.4f}",
                "n/a" if na is None else f"{na:.4f}",
            )
        )
    print(metrics.format_table(("dataset", "tok_orig", "tok_cur", "C.R.", "norm_token", "norm_acc"), rows))
    print(f"A.C.R. {metrics.pct(result['avg_compression_rate'])}")
    if args.json:
        _emit_json(result, args.json)
    return 0


def cmd_simulate(args):
    config = load_config(args.config)
    rows = surface_grid(config.surface, args.max_exposure, args.points)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8", newline="")
    try:
        sep = "," if args.format == "csv" else "\t"
        out.write(sep.join(("exposure_sys1", "exposure_sys2", "mean_tokens", "mean_accuracy")) + "\n")
        for e1, e2, tok, acc in rows:
            out.write(sep.join((f"{e1:.6g}", f"{e2:.6g}", f"{tok:.6f}", f"{acc:.6f}")) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if args.plot_dir:
        from .plotting import plot_surface

        d = Path(args.plot_dir)
        d.mkdir(parents=True, exist_ok=True)
        print(f"wrote {plot_surface(rows, d / 'surface.png')}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="l2s", description="Dynamic System-1/System-2 data reweighting toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the reweighting loop")
    r.add_argument("--config", help="INI run config (defaults apply when omitted)")
    r.add_argument("--seed", type=int, help="overrides $L2S_SEED and the config seed")
    r.add_argument("--static", metavar="A1:A2", help="fixed mixture, e.g. 0.8:0.2")
    r.add_argument("--out", default="runlog.jsonl", help="run log path (JSON lines)")
    r.add_argument("--plot-dir", help="also render the run trajectory figure here")
    r.set_defaults(func=cmd_run)

    def results_opts(sp):
        sp.add_argument("--tokenizer", choices=metrics.TOKENIZERS, default="whitespace")
        sp.add_argument("--json", metavar="PATH", help="also write a JSON report ('-' for stdout)")

    m = sub.add_parser("metrics", help="per-dataset accuracy and length of a results file")
    m.add_argument("results")
    results_opts(m)
    m.set_defaults(func=cmd_metrics)

    k = sub.add_parser("keywords", help="deliberation keyword counts of a results file")
    k.add_argument("results")
    k.add_argument("--by-dataset", action="store_true")
    results_opts(k)
    k.set_defaults(func=cmd_keywords)

    c = sub.add_parser("compress-rate", help="compression of CURRENT against ORIGINAL results")
    c.add_argument("original")
    c.add_argument("current")
    results_opts(c)
    c.set_defaults(func=cmd_compress_rate)

    s = sub.add_parser("simulate", help="tabulate the simulated response surface")
    s.add_argument("--config")
    s.add_argument("--max-exposure", type=float, default=2.0)
    s.add_argument("--points", type=int, default=21)
    s.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    s.add_argument("--out", default="-")
    s.add_argument("--plot-dir")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except L2SError as exc:
        print(f"error: {exc.kind}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (OSError, ZeroDivisionError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
