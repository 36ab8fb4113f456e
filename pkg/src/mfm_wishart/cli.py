"""Command-line interface: ``mfm-wishart <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure.  Config files are JSON; any flag given on the command line
overrides the matching config key.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .baselines import hierarchical_ward, pairwise_riemannian, pam
from .errors import ConfigError, DataError, MfmWishartError
from .experiment import (application_config, dataset_from_config, model_from_name,
                         prior_from_config, summarize_fit)
from .io import (DatasetBundle, default_workers, read_dataset, read_json, read_labels,
                 read_result, write_dataset, write_json, write_labels, write_result,
                 write_trace)
from .mfm_prior import prior_spec_from_dict
from .pipeline import connectivity_matrices, load_timeseries_dir, parse_channels
from .postprocess import adjusted_rand_index, fisher_exact_2x2
from .sampler import SamplerConfig, run


# -- simulate ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = read_json(args.config, "config")
    if args.seed is not None:
        cfg = dict(cfg, seed=args.seed)
    bundle = dataset_from_config(cfg, source=str(args.config))
    write_dataset(args.out, bundle)
    print(f"wrote {bundle.n} matrices ({bundle.p}x{bundle.p}) to {args.out}")


# -- pipeline ---------------------------------------------------------------------------

def cmd_pipeline(args):
    tables, names = load_timeseries_dir(args.directory, args.pattern, args.delimiter,
                                        args.skip_header)
    channels = parse_channels(args.channels)
    mats, length = connectivity_matrices(tables, channels, args.length,
                                         one_based=not args.zero_based, names=names)
    meta = {"source": "pipeline", "channels": args.channels, "length": int(length),
            "one_based": not args.zero_based}
    write_dataset(args.out, DatasetBundle(mats, subject_ids=names, meta=meta))
    print(f"wrote {len(names)} correlation matrices ({len(channels)}x{len(channels)}, "
          f"T = {length}) to {args.out}")


# -- fit ------------------------------------------------------------------------------------

_FLAG_KEYS = (("iterations", "iterations"), ("burn_in", "burn_in"), ("seed", "seed"),
              ("proposal_sd", "proposal_sd"), ("thin", "thin"))


def build_sampler_config(cfg, p, args, source="<config>"):
    """Merge a config dict, defaults for dimension ``p`` and CLI overrides."""
    if cfg.get("format") == "mfm-wishart-result":
        # re-run from the config embedded in a result file
        cfg = cfg["config"]
    preset = getattr(args, "preset", None) or cfg.get("preset", "simulation")
    if preset == "application":
        base = application_config(p).to_dict()
    elif preset == "simulation":
        base = SamplerConfig.default(p, seed=0).to_dict()
    else:
        raise ConfigError(f"{source}: unknown preset {preset!r}")
    merged = dict(base)
    for key in ("iterations", "burn_in", "thin", "proposal_sd", "seed", "init", "nu_init",
                "fix_nu", "scan", "scan_order"):
        if key in cfg:
            merged[key] = cfg[key]
    if "prior" in cfg:
        prior = dict(base["prior"], **cfg["prior"])
        merged["prior"] = prior_from_config(prior, p, source).to_dict()
    if "model" in cfg:
        merged["model"] = cfg["model"]
    if "seed" not in cfg and getattr(args, "seed", None) is None:
        raise ConfigError(f"{source}: missing field 'seed' (or pass --seed)")
    for flag, key in _FLAG_KEYS:
        val = getattr(args, flag, None)
        if val is not None:
            merged[key] = val
    if getattr(args, "model", None):
        merged["model"] = model_from_name(args.model).to_dict()
    try:
        merged["model"] = prior_spec_from_dict(merged["model"]).to_dict()
        return SamplerConfig.from_dict(merged)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{source}: invalid sampler config ({exc})") from None
    except ValueError as exc:
        if isinstance(exc, MfmWishartError):
            raise
        raise ConfigError(f"{source}: {exc}") from None


def _sidecars(out):
    out = Path(out)
    stem = out.name[:-len(".json")] if out.name.endswith(".json") else out.name
    return out.with_name(stem + ".trace.json.gz"), out.with_name(stem + ".timing.json")


def fit_one(dataset_path, out, cfg_doc, args):
    bundle = read_dataset(dataset_path)
    config = build_sampler_config(cfg_doc, bundle.p, args, str(args.config or "<defaults>"))
    trace = run(bundle.matrices, config)
    trace_path, timing_path = _sidecars(out)
    write_trace(trace_path, trace)
    result = {"dataset": str(dataset_path), "n": bundle.n, "p": bundle.p,
              "model": config.model.to_dict()["kind"], "config": config.to_dict(),
              "trace": trace_path.name, "timing": timing_path.name}
    result.update(summarize_fit(trace, bundle.labels))
    write_result(out, result)
    # wall-clock numbers live apart so results and traces stay reproducible bytes
    write_json(timing_path, {"seconds": trace.seconds,
                             "iteration_seconds": trace.iteration_seconds.tolist()})
    return out, result["dahl"]["k_hat"], trace.seconds


def cmd_fit(args):
    cfg_doc = read_json(args.config, "config") if args.config else {}
    datasets = args.datasets
    if len(datasets) == 1:
        outs = [Path(args.out)]
    else:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        outs = [outdir / (Path(d).name.split(".")[0] + ".result.json") for d in datasets]
    workers = args.workers or default_workers()
    jobs = list(zip(datasets, outs))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_fit_job, [(d, o, cfg_doc, args) for d, o in jobs]))
    else:
        done = [fit_one(d, o, cfg_doc, args) for d, o in jobs]
    for out, k_hat, secs in done:
        print(f"{out}: K_hat = {k_hat} ({secs:.1f} s)")


def _fit_job(job):
    return fit_one(*job)


# -- baselines --------------------------------------------------------------------------------

def cmd_baselines(args):
    bundle = read_dataset(args.dataset)
    if (args.k is None) == (args.from_result is None):
        raise ConfigError("give exactly one of --k or --from-result")
    k = args.k if args.k is not None else int(read_result(args.from_result)["dahl"]["k_hat"])
    d = pairwise_riemannian(bundle.matrices, args.metric)
    methods = ["ward", "pam"] if args.method == "both" else [args.method]
    out = Path(args.out)
    for m in methods:
        z = hierarchical_ward(d, k, args.ward_variant) if m == "ward" else pam(d, k)
        path = out if len(methods) == 1 else out.with_name(f"{out.stem}.{m}{out.suffix}")
        meta = {"dataset": str(args.dataset), "metric": args.metric}
        if m == "ward":
            meta["variant"] = args.ward_variant
        write_labels(path, z, m, k, meta)
        print(f"{path}: {m}, k = {k}")


# -- evaluate ---------------------------------------------------------------------------------

def contingency(a, b):
    """Cross-tabulation of two labelings; rows follow ``a``'s sorted labels."""
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    t = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(t, (ia, ib), 1)
    return t


def _parse_table(text):
    try:
        cells = [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"--contingency expects four integers a,b,c,d; got {text!r}") from None
    if len(cells) != 4:
        raise ConfigError(f"--contingency expects four integers a,b,c,d; got {text!r}")
    return np.array(cells).reshape(2, 2)


def evaluate(truth=None, estimates=(), covariate=None, table=None):
    report = {"estimates": []}
    for name, z in estimates:
        rec = {"source": name, "k_hat": int(np.unique(z).size)}
        if truth is not None:
            if len(truth) != len(z):
                raise DataError(f"{name}: {len(z)} labels against {len(truth)} true labels")
            k0 = int(np.unique(truth).size)
            rec.update(ari=adjusted_rand_index(truth, z), k0=k0, k_correct=rec["k_hat"] == k0)
        if covariate is not None:
            t = contingency(z, covariate)
            rec["contingency"] = t.tolist()
            if t.shape == (2, 2):
                rec["fisher_p"] = fisher_exact_2x2(t)
        report["estimates"].append(rec)
    if table is not None:
        report["contingency"] = table.tolist()
        report["fisher_p"] = fisher_exact_2x2(table)
    return report


def cmd_evaluate(args):
    truth = read_labels(args.truth) if args.truth else None
    cov = read_labels(args.covariate) if args.covariate else None
    ests = [(str(p), read_labels(p)) for p in args.estimates]
    table = _parse_table(args.contingency) if args.contingency else None
    if not ests and table is None:
        raise ConfigError("nothing to evaluate: give estimate files or --contingency")
    report = evaluate(truth, ests, cov, table)
    write_json(args.out, report)
    for rec in report["estimates"]:
        line = f"{rec['source']}: K_hat = {rec['k_hat']}"
        if "ari" in rec:
            line += f", ARI = {rec['ari']:.4f}"
        if "fisher_p" in rec:
            line += f", Fisher p = {rec['fisher_p']:.3f}"
        print(line)
    if table is not None:
        print(f"contingency {table.tolist()}: Fisher p = {report['fisher_p']:.3f}")


# -- report ----------------------------------------------------------------------------------

def _mean_sd(xs):
    xs = np.asarray(xs, dtype=float)
    sd = float(xs.std(ddof=1)) if xs.size > 1 else 0.0
    return {"mean": float(xs.mean()), "sd": sd}


def _load_for_report(path):
    res = read_result(path)
    timing = Path(path).with_name(res.get("timing", ""))
    secs = None
    if res.get("timing") and timing.is_file():
        secs = read_json(timing, "timing").get("seconds")
    return res, secs


def aggregate(results):
    """Group results by model and summarize over replicates."""
    groups = {}
    for res, secs in results:
        groups.setdefault(res.get("model", "?"), []).append((res, secs))
    out = {}
    for model, items in sorted(groups.items()):
        rs = [r for r, _ in items]
        rec = {"replicates": len(rs), "k_hat": _mean_sd([r["dahl"]["k_hat"] for r in rs]),
               "nu_mean": _mean_sd([r["nu"]["mean"] for r in rs])}
        truths = [r["truth"] for r in rs if "truth" in r]
        if len(truths) == len(rs):
            rec["ari"] = _mean_sd([t["ari"] for t in truths])
            rec["k_accuracy"] = float(np.mean([t["k_correct"] for t in truths]))
        secs = [s for _, s in items if s is not None]
        if secs:
            rec["seconds"] = _mean_sd(secs)
        out[model] = rec
    return out


def cmd_report(args):
    workers = args.workers or default_workers()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        loaded = list(pool.map(_load_for_report, args.results))
    table = aggregate(loaded)
    write_json(args.out, {"groups": table, "sources": [str(p) for p in args.results]})
    print(f"{'model':<6} {'reps':>4} {'ARI mean':>9} {'ARI sd':>8} {'K acc':>6} {'K_hat':>6}")
    for model, rec in table.items():
        ari = rec.get("ari", {"mean": float("nan"), "sd": float("nan")})
        print(f"{model:<6} {rec['replicates']:>4} {ari['mean']:>9.4f} {ari['sd']:>8.4f} "
              f"{rec.get('k_accuracy', float('nan')):>6.2f} {rec['k_hat']['mean']:>6.2f}")


# -- parser --------------------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="mfm-wishart",
                                 description="Bayesian clustering of SPD matrices.")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset bundle")
    s.add_argument("config", type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pipeline", help="time-series tables to correlation matrices")
    s.add_argument("directory", type=Path)
    s.add_argument("--channels", required=True, help='e.g. "40-46" or "1,3,5-7"')
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--length", type=int, help="crop to the first T rows (default: shortest)")
    s.add_argument("--pattern", default="*")
    s.add_argument("--delimiter")
    s.add_argument("--skip-header", action="store_true")
    s.add_argument("--zero-based", action="store_true", help="channel numbers start at 0")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("fit", help="run the sampler on one or more datasets")
    s.add_argument("datasets", nargs="+", type=Path)
    s.add_argument("--model", choices=("mfm", "dpm"))
    s.add_argument("--config", type=Path, help="JSON config, or a result file to re-run")
    s.add_argument("--preset", choices=("simulation", "application"))
    s.add_argument("--out", required=True, type=Path,
                   help="result file, or a directory when several datasets are given")
    s.add_argument("--seed", type=int)
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--proposal-sd", dest="proposal_sd", type=float)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("baselines", help="Ward and PAM on Riemannian distances")
    s.add_argument("dataset", type=Path)
    s.add_argument("--k", type=int)
    s.add_argument("--from-result", dest="from_result", type=Path)
    s.add_argument("--method", choices=("ward", "pam", "both"), default="both")
    s.add_argument("--metric", choices=("affine", "log-euclidean"), default="affine")
    s.add_argument("--ward-variant", dest="ward_variant", choices=("ward.D2", "ward.D"),
                   default="ward.D2")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_baselines)

    s = sub.add_parser("evaluate", help="ARI, K accuracy, contingency and Fisher test")
    s.add_argument("estimates", nargs="*", type=Path)
    s.add_argument("--truth", type=Path)
    s.add_argument("--covariate", type=Path)
    s.add_argument("--contingency", help="2x2 table as a,b,c,d (row-major)")
    s.add_argument("--out", required=True, type=Path)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="aggregate result files over replicates")
    s.add_argument("results", nargs="+", type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except MfmWishartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
