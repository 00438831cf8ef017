"""Command-line entry point: ``imvcc <command>``.

Commands: ``synth``, ``mask``, ``run``, ``ablate``, ``diagnose`` and
``export-embeddings``. Global flags ``--config``, ``--out``, ``--seed`` and
``--threads`` may appear before or after the command name.

Exit codes: 0 success, 2 bad input or configuration, 3 training failure,
4 evaluation failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data import generate_mask, load_dataset, make_synthetic, save_dataset, save_mask
from .diagnostics import ConvergenceTrace, spectrum, write_spectrum
from .errors import ImvccError, TrainingError
from .model import LOSS_ABLATIONS, ModelConfig, ablation_config
from .nn import mlp_forward
from .pipeline import run_pipeline
from .recover import read_embeddings
from .train import load_checkpoint

EXIT_OK, EXIT_INPUT, EXIT_TRAIN, EXIT_EVAL = 0, 2, 3, 4
DEFAULT_ETAS = (0.1, 0.3, 0.5, 0.7)
CONTRAST_ROWS = (("X-Z", "full"), ("X-Z,X-Z*", "both"), ("X-Z*", "sub"))


class InputError(ImvccError):
    """Invalid command-line input, raised before any training starts."""


# --------------------------------------------------------------------------
# argument parsing

def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags with SUPPRESS so either position works
    dflt = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, default=dflt(None), help="ModelConfig JSON file")
    p.add_argument("--out", type=Path, default=dflt(Path("out")), help="output directory")
    p.add_argument("--seed", type=int, default=dflt(0), help="base random seed")
    p.add_argument("--threads", type=int, default=dflt(1), help="worker processes for independent runs")
    return p


def _data_flags(p):
    p.add_argument("--data", type=Path, required=True, help="dataset prefix (csv) or file (packed)")
    p.add_argument("--format", choices=("csv", "packed"), default="csv")
    p.add_argument("--k", type=int, default=None, help="cluster count for unlabelled data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imvcc", parents=[_global_flags(True)],
                                     description="Incomplete multi-view contrastive clustering")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_flags(False)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic multi-view dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--sep", type=float, default=5.0)
    p.add_argument("--name", default="synth")
    p.add_argument("--format", choices=("csv", "packed"), default="csv")

    p = sub.add_parser("mask", parents=[common], help="draw an observation mask")
    p.add_argument("--n", type=int, help="sample count (or take it from --data)")
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--data", type=Path)
    p.add_argument("--format", choices=("csv", "packed"), default="csv")
    p.add_argument("--eta", type=float, required=True)

    p = sub.add_parser("run", parents=[common], help="train and cluster over missing rates and seeds")
    _data_flags(p)
    p.add_argument("--eta", type=_floats, default=list(DEFAULT_ETAS))
    p.add_argument("--seeds", type=_ints, default=None, help="defaults to the single --seed")
    p.add_argument("--no-pretrain", action="store_true")
    p.add_argument("--grid-lambda1", type=_floats, default=None)
    p.add_argument("--grid-lambda2", type=_floats, default=None)

    p = sub.add_parser("ablate", parents=[common], help="loss and contrast-target ablations at eta=0.5")
    _data_flags(p)
    p.add_argument("--seeds", type=_ints, default=None)
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--no-pretrain", action="store_true")

    p = sub.add_parser("diagnose", parents=[common], help="spectra and trace summary of a finished run")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--compare", type=Path, default=None, help="run trained with lambda1=0 to compare against")

    p = sub.add_parser("export-embeddings", parents=[common], help="re-export latents of a finished run")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--decode", action="store_true", help="also write decoded views for recovered entries")
    return parser


# --------------------------------------------------------------------------
# helpers

def load_config(args) -> ModelConfig:
    if args.config is None:
        cfg = ModelConfig()
    else:
        try:
            cfg = ModelConfig.from_json(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
    changes = {"seed": args.seed}
    if getattr(args, "no_pretrain", False):
        changes["epochs_pretrain"] = 0
    return dataclasses.replace(cfg, **changes)


def _check_etas(etas):
    if not etas:
        raise InputError("need at least one eta")
    for e in etas:
        if not 0.0 <= e < 1.0:
            raise InputError(f"eta must lie in [0, 1), got {e}")


def _pct(values):
    vals = [v for v in values if v is not None]
    return "" if not vals else f"{100.0 * float(np.mean(vals)):.2f}"


def _run_cell(job):
    """One (config, eta, seed) training run; returns a result row, never raises."""
    ds, cfg, eta, run_dir, k = job
    row = {"eta": eta, "seed": cfg.seed, "dir": str(run_dir)}
    try:
        rep = run_pipeline(ds, cfg, eta=eta, run_dir=run_dir, k=k)
    except TrainingError as exc:
        return {**row, "status": "failed:training", "error": str(exc)}
    except ImvccError as exc:
        return {**row, "status": "failed:input", "error": str(exc)}
    except Exception as exc:  # noqa: BLE001 - any other stage failure is recorded, not raised
        return {**row, "status": "failed:evaluation", "error": f"{type(exc).__name__}: {exc}"}
    if rep.acc is not None and not all(np.isfinite(v) for v in (rep.acc, rep.nmi, rep.ari)):
        return {**row, "status": "failed:evaluation", "error": "non-finite metric"}
    return {**row, "status": "ok", "acc": rep.acc, "nmi": rep.nmi, "ari": rep.ari,
            "erank_sub": rep.erank_sub, "erank_full": rep.erank_full}


def _execute(jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def _write_table(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _aggregate(results):
    ok = [r for r in results if r["status"] == "ok"]
    failed = [r for r in results if r["status"] != "ok"]
    status = "ok" if not failed else ";".join(f"seed{r['seed']}:{r['status']}" for r in failed)
    return [_pct([r.get(m) for r in ok]) for m in ("acc", "nmi", "ari")] + [len(ok), status]


def _exit_code(results):
    states = {r["status"] for r in results}
    if "failed:training" in states:
        return EXIT_TRAIN
    if "failed:evaluation" in states:
        return EXIT_EVAL
    if "failed:input" in states:
        return EXIT_INPUT
    return EXIT_OK


def _load(args):
    try:
        return load_dataset(args.data, args.format, k=args.k)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from None


# --------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    if args.n < 2 * args.k or args.sep <= 0 or args.views < 2:
        raise InputError("need n >= 2k, sep > 0 and at least two views")
    ds = dataclasses.replace(make_synthetic(args.n, args.k, args.views, args.sep, seed=args.seed), name=args.name)
    target = args.out / (args.name + (".mvc" if args.format == "packed" else ""))
    files = save_dataset(ds, target, args.format)
    for f in files:
        print(f)
    return EXIT_OK


def cmd_mask(args) -> int:
    n, v = args.n, args.views
    if args.data is not None:
        ds = _load(argparse.Namespace(data=args.data, format=args.format, k=None))
        n, v = ds.n, ds.n_views
    if n is None:
        raise InputError("give --n or --data")
    _check_etas([args.eta])
    path, side = save_mask(generate_mask(n, v, args.eta, args.seed), args.out / "mask.csv")
    print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    _check_etas(args.eta)
    cfg = load_config(args)
    seeds = args.seeds or [args.seed]
    ds = _load(args)
    if (args.grid_lambda1 is None) != (args.grid_lambda2 is None):
        raise InputError("--grid-lambda1 and --grid-lambda2 go together")
    if args.grid_lambda1 is not None:
        return _grid(args, ds, cfg, seeds)
    jobs = [(ds, dataclasses.replace(cfg, seed=s), eta, args.out / f"eta{eta:g}" / f"seed{s}", args.k)
            for eta in args.eta for s in seeds]
    results = _execute(jobs, args.threads)
    rows = []
    for eta in args.eta:
        cell = [r for r in results if r["eta"] == eta]
        rows.append([f"{eta:g}"] + _aggregate(cell))
    _write_table(args.out / "results.csv", ["eta", "acc", "nmi", "ari", "n_ok", "status"], rows)
    _write_table(args.out / "runs.csv", ["eta", "seed", "status", "acc", "nmi", "ari", "dir"],
                 [[f"{r['eta']:g}", r["seed"], r["status"], r.get("acc", ""), r.get("nmi", ""), r.get("ari", ""),
                   r["dir"]] for r in results])
    for r in rows:
        print(",".join(str(x) for x in r))
    return _exit_code(results)


def _grid(args, ds, cfg, seeds) -> int:
    eta = args.eta[0]
    cells, jobs = [], []
    for l1 in args.grid_lambda1:
        for l2 in args.grid_lambda2:
            if l1 < 0 or l2 < 0:
                raise InputError("grid weights must be non-negative")
            cells.append((l1, l2))
            for s in seeds:
                c = dataclasses.replace(cfg, lambda1=l1, lambda2=l2, seed=s)
                jobs.append((ds, c, eta, args.out / "grid" / f"l1_{l1:g}_l2_{l2:g}" / f"seed{s}", args.k))
    results = _execute(jobs, args.threads)
    per = len(seeds)
    rows = [[f"{l1:g}", f"{l2:g}"] + _aggregate(results[i * per:(i + 1) * per]) for i, (l1, l2) in enumerate(cells)]
    _write_table(args.out / "grid.csv", ["lambda1", "lambda2", "acc", "nmi", "ari", "n_ok", "status"], rows)
    return _exit_code(results)


def _loss_label(flags):
    use_lr, use_lc, use_lz = flags
    return "+".join(n for n, on in (("Lr", use_lr), ("Lc", use_lc), ("Lz", use_lz)) if on)


def cmd_ablate(args) -> int:
    _check_etas([args.eta])
    cfg = load_config(args)
    seeds = args.seeds or [args.seed]
    ds = _load(args)
    if ds.labels is None:
        raise InputError("ablation needs a labelled dataset")
    studies = []
    for flags in LOSS_ABLATIONS:
        use_lr, use_lc, use_lz = flags
        studies.append(("loss", _loss_label(flags), ablation_config(cfg, use_lz, use_lc, use_lr)))
    for label, mode in CONTRAST_ROWS:
        studies.append(("contrast", label, ablation_config(cfg, contrast_on=mode)))
    jobs = []
    for study, label, c in studies:
        slug = label.replace("+", "_").replace(",", "_").replace("*", "s")
        for s in seeds:
            jobs.append((ds, dataclasses.replace(c, seed=s), args.eta, args.out / study / slug / f"seed{s}", None))
    results = _execute(jobs, args.threads)
    per = len(seeds)
    tables = {"loss": [], "contrast": []}
    for i, (study, label, _) in enumerate(studies):
        tables[study].append([label] + _aggregate(results[i * per:(i + 1) * per]))
    header = ["config", "acc", "nmi", "ari", "n_ok", "status"]
    _write_table(args.out / "ablation_loss.csv", header, tables["loss"])
    _write_table(args.out / "ablation_contrast.csv", header, tables["contrast"])
    for r in tables["loss"] + tables["contrast"]:
        print(",".join(str(x) for x in r))
    return _exit_code(results)


def _run_spectra(run: Path):
    cfg_path, lat = run / "config.json", run / "embeddings" / "latents.csv"
    for f in (cfg_path, lat):
        if not f.exists():
            raise InputError(f"{run} is not a finished run directory: missing {f.relative_to(run)}")
    cfg = ModelConfig.from_json(cfg_path.read_text())
    bundle = read_embeddings(lat, cfg.d0)
    return bundle, [spectrum(z) for z in bundle.Z], [spectrum(z) for z in bundle.sub]


def cmd_diagnose(args) -> int:
    bundle, full, sub = _run_spectra(args.run)
    out = args.out
    summary = {"erank_full": [r.effective_rank for r in full], "erank_sub": [r.effective_rank for r in sub]}
    for v, (f, s) in enumerate(zip(full, sub)):
        write_spectrum(f, out / f"spectrum_Z_view{v}.csv")
        write_spectrum(s, out / f"spectrum_Zsub_view{v}.csv")
    trace_path = args.run / "trace.csv"
    if trace_path.exists():
        summary["trace"] = ConvergenceTrace.read(trace_path).summary()
    print(f"effective rank Z*: {np.mean(summary['erank_sub']):.3f}  Z: {np.mean(summary['erank_full']):.3f}")
    code = EXIT_OK
    if args.compare is not None:
        _, _, base = _run_spectra(args.compare)
        mine, other = float(np.mean(summary["erank_sub"])), float(np.mean([r.effective_rank for r in base]))
        passed = mine > other
        summary["compare"] = {"erank_sub": mine, "baseline_erank_sub": other, "pass": passed}
        print(f"{'PASS' if passed else 'FAIL'} effective rank of Z* {mine:.3f} vs baseline {other:.3f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnose.json").write_text(json.dumps(summary, indent=2))
    return code


def cmd_export(args) -> int:
    run = args.run
    lat = run / "embeddings" / "latents.csv"
    if not lat.exists() or not (run / "config.json").exists():
        raise InputError(f"{run} is not a finished run directory")
    cfg = ModelConfig.from_json((run / "config.json").read_text())
    bundle = read_embeddings(lat, cfg.d0)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    for v, z in enumerate(bundle.Z):
        np.savetxt(out / f"latent_view{v}.csv", z, delimiter=",", fmt="%.17g")
    np.savetxt(out / "provenance.csv", bundle.provenance, delimiter=",", fmt="%d")
    if args.decode:
        models = load_checkpoint(run / "checkpoint.bin")
        for v, (vm, z) in enumerate(zip(models, bundle.Z)):
            rows = np.flatnonzero(bundle.provenance[:, v] == 1)
            dec = mlp_forward(vm.decoder, z[rows])[0] if rows.size else np.zeros((0, vm.decoder.out_dim))
            np.savetxt(out / f"decoded_view{v}.csv", np.column_stack([rows, dec]), delimiter=",", fmt="%.17g")
    print(out)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "mask": cmd_mask, "run": cmd_run, "ablate": cmd_ablate,
            "diagnose": cmd_diagnose, "export-embeddings": cmd_export}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (ImvccError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
