"""Batch command line: generate, clean, eda, run, report, bench, train, flag.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
"""

from __future__ import annotations

import argparse
import dataclasses
import csv
import json
import logging
import sys
from pathlib import Path

from . import eda, harness
from .dataset import cleanse, encode, ingest_csv, load_aliases, validate, write_csv
from .errors import DataError, ModelError
from .synth import SynthProfile, synthesize

EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 1, 2, 3

log = logging.getLogger("prime_estate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_rows(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _load_matrix(path):
    listings = ingest_csv(path).listings
    return listings, encode(cleanse(listings))


def _entries_from_spec_file(path: str, plan: harness.CvPlan) -> list[harness.GridEntry]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    docs = doc if isinstance(doc, list) else [doc]
    entries = []
    for d in docs:
        try:
            spec = harness.ModelSpec.from_dict(d)
            spec.build_config(0)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid spec {d!r}: {exc}") from exc
        entries.append(harness.GridEntry(spec, d.get("repetitions", plan.repetitions(spec)), plan.n_folds))
    return entries


# --- commands -------------------------------------------------------------------


def cmd_generate(args):
    profile = SynthProfile.load(args.profile) if args.profile else SynthProfile()
    if args.n is not None:
        profile = profile.scaled(args.n)
    if args.seed is not None:
        profile = dataclasses.replace(profile, seed=args.seed)
    listings = synthesize(profile)
    write_csv(listings, args.out)
    log.info("wrote %d listings to %s", len(listings), args.out)


def cmd_clean(args):
    result = ingest_csv(args.input, strict=args.strict)
    aliases = load_aliases(args.aliases) if args.aliases else None
    cleaned = cleanse(result.listings, aliases)
    for x in cleaned:
        for warning in validate(x):
            log.warning(warning)
    write_csv(cleaned, args.out)
    log.info("cleaned %d listings (%d skipped)", len(cleaned), result.skipped)


def cmd_eda(args):
    listings, m = _load_matrix(args.input)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    variables = [c.name for c in m.columns if c.block is None and len(set(m.column(c.name))) > 1]
    corr = eda.correlation_matrix(m, variables + [eda.TARGET])
    with (out / "correlations.csv").open("w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(corr.to_rows())

    fit = eda.ols_from_matrix(m)
    (out / "ols.json").write_text(json.dumps(fit.to_dict(), indent=2), encoding="utf-8")

    rows = []
    for field in ("price", "constructed_area"):
        for s in eda.zone_summaries(listings, field):
            rows.append({"field": field, **s.__dict__})
    _write_rows(out / "zones.csv", rows)

    area = m.column("constructed_area")
    fits = {str(o): eda.poly_fit(area, m.target, o) for o in (1, 2, 3)}
    (out / "polyfit.json").write_text(
        json.dumps({o: {"coefficients": f.coefficients.tolist(), "r2": f.r2} for o, f in fits.items()}, indent=2),
        encoding="utf-8",
    )


def cmd_run(args):
    _, m = _load_matrix(args.input)
    plan = harness.CvPlan(seed=args.fold_seed, stochastic_repetitions=args.repetitions or harness.STOCHASTIC_REPETITIONS)
    if args.spec:
        entries = _entries_from_spec_file(args.spec, plan)
    elif args.grid == "full":
        entries = harness.enumerate_grid(plan)
    else:
        entries = harness.desk_grid(args.repetitions or 5)
    harness.warmup()
    reports = harness.run_grid(m, entries, plan, args.seed, args.workers, record_timing=not args.no_timings)
    if args.emit == "csv":
        _write_rows(Path(args.out), harness.flatten_reports(reports))
    else:
        Path(args.out).write_text(harness.reports_to_json(reports), encoding="utf-8")


def _fmt(value, std):
    if value is None:
        return "-"
    return f"{value:.4f} ({std:.4f})" if std is not None else f"{value:.4f} (--)"


def cmd_report(args):
    reports = harness.reports_from_json(Path(args.input).read_text(encoding="utf-8"))
    rows = harness.summary_table(reports, args.top)
    header = ["model", "E_var", "MAE", "MedAE", "MSE", "R2"]
    print("\t".join(header))
    for r in rows:
        print("\t".join([r["spec_id"]] + [_fmt(r[f], r[f"{f}_std"]) for f in ("e_var", "mae", "medae", "mse", "r2")]))


def cmd_bench(args):
    _, m = _load_matrix(args.input)
    plan = harness.CvPlan(seed=args.fold_seed, stochastic_repetitions=args.repetitions)
    entries = [e for e in harness.enumerate_grid(plan) if not e.spec.normalized]
    harness.warmup()
    reports = harness.run_grid(m, entries, plan, args.seed, workers=1)
    Path(args.out).write_text(json.dumps(harness.timing_table(reports), indent=2), encoding="utf-8")


def cmd_train(args):
    listings = cleanse(ingest_csv(args.input).listings)
    if args.spec:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        spec = harness.ModelSpec.from_dict(doc[0] if isinstance(doc, list) else doc)
    else:
        spec = harness.ModelSpec.make("extratrees", n_estimators=50, criterion="mae", bootstrap=True)
    if spec.algorithm != "extratrees":
        raise UsageError("train only supports extratrees specs")
    harness.train_model(listings, spec, args.seed).save(args.out)


def cmd_flag(args):
    listings = cleanse(ingest_csv(args.input).listings)
    model = harness.TrainedModel.load(args.model)
    if not 0 < args.tau < 1:
        raise UsageError("--tau must lie in (0, 1)")
    flags = harness.flag_opportunities(model, listings, args.tau)
    _write_rows(Path(args.out), [f.__dict__ for f in flags])
    log.info("%d of %d listings flagged", sum(f.flagged for f in flags), len(flags))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prime-estate", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic listing CSV")
    g.add_argument("--profile")
    g.add_argument("--seed", type=int)
    g.add_argument("--n", type=int, help="row count (scales the profile)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("clean", help="cleanse a listing CSV")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--aliases")
    c.add_argument("--strict", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_clean)

    e = sub.add_parser("eda", help="correlations, OLS, zone summaries, polynomial fits")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_eda)

    r = sub.add_parser("run", help="cross-validated experiments")
    r.add_argument("--in", dest="input", required=True)
    which = r.add_mutually_exclusive_group()
    which.add_argument("--grid", choices=("full", "reduced"), default="reduced")
    which.add_argument("--spec")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--fold-seed", type=int, default=0)
    r.add_argument("--repetitions", type=int)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--no-timings", action="store_true", help="omit wall times (reproducible output)")
    r.add_argument("--emit", choices=("json", "csv"), default="json")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("report", help="summary table sorted by mean MSE")
    rp.add_argument("--in", dest="input", required=True)
    rp.add_argument("--top", type=int, default=10)
    rp.set_defaults(func=cmd_report)

    b = sub.add_parser("bench", help="train/predict times per parameter value")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--fold-seed", type=int, default=0)
    b.add_argument("--repetitions", type=int, default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("train", help="fit an extra-trees model on all rows")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--spec")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("flag", help="flag listings priced below their estimate")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--model", required=True)
    f.add_argument("--tau", type=float, default=harness.DEFAULT_TAU)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_flag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    return 0


if __name__ == "__main__":
    sys.exit(main())
