"""``yieldcast`` command line: one subcommand per pipeline stage.

Every command reads a flat config file (``--config``), applies flag
overrides, writes its artifacts under ``output_dir`` and records a
``manifest_<command>.json`` with the config hash, seed, library versions and
artifact checksums. Exit codes: 0 ok, 2 usage/config, 3 data, 4 numeric.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, augment, evaluate, features, ingest, persist, select, train
from .config import RunConfig, load_config
from .core import MONTH_TO_T, SEASON_DAYS, tensor_truncate_time
from .errors import ConfigError, DataError, YieldcastError
from .lstm import ModelLayout, predict

log = logging.getLogger("yieldcast")

TRAIN_CACHE = "samples_train.ylds"
TEST_CACHE = "samples_test.ylds"
MODEL_FILE = "model.yldc"
TRIAL_LOG = "trials.csv"


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, module="cli")


# ---------------------------------------------------------------- helpers


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(cfg: RunConfig, command: str, artifacts: list[Path], extra: dict | None = None) -> Path:
    """Deterministic JSON manifest: no timestamps, sorted keys, artifact hashes."""
    out = _out(cfg)
    doc = {
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.to_text().splitlines(),
        "seed": cfg.seed,
        "versions": {
            "yieldcast": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "artifacts": {str(p.relative_to(out)): _sha256(p) for p in sorted(artifacts)},
    }
    if extra:
        doc["result"] = extra
    path = out / f"manifest_{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_raw(cfg: RunConfig):
    return ingest.load_dataset(
        cfg.path("weather"), cfg.path("yields"), cfg.path("soil"), cfg.path("pdsi"),
        impute=None if cfg.impute == "none" else cfg.impute,
    )


def _crd_map(cfg: RunConfig) -> dict[str, list[str]]:
    path = cfg.path("crd_map")
    if path.exists():
        return ingest.parse_crd_map_csv(path)
    log.warning("no CRD map at %s; deriving it from soil.csv", path)
    return {crd: sorted(c) for crd, c in _soil(cfg).items()}


def _soil(cfg: RunConfig) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for cid, meta in ingest.parse_soil_csv(cfg.path("soil")).items():
        out.setdefault(meta.crd_id, []).append(cid)
    return out


def _cache(cfg: RunConfig, name: str):
    path = Path(cfg.output_dir) / name
    if not path.exists():
        raise DataError(f"missing {path}; run `yieldcast featurize` first", module="cli")
    samples, fs, trend = persist.load_samples(path)
    if fs.name != cfg.features:
        raise ConfigError(f"cache {path} was built with features {fs.name}, config says {cfg.features}",
                          module="cli")
    return samples, fs, trend


def training_split(cfg: RunConfig) -> train.DataSplit:
    """Validation originals held out first, then the remaining originals augmented."""
    samples, _, _ = _cache(cfg, TRAIN_CACHE)
    fit, val = train.split_samples(samples, cfg.val_fraction, cfg.seed)
    plan = augment.AugmentPlan.parse(cfg.augment, _crd_map(cfg)) if cfg.augment != "none" else None
    holdout = frozenset((s.key, s.year) for s in val)
    fit = augment.augment_dataset(samples, plan, cfg.augment_strict, holdout=holdout)
    X, y = train.stack(fit)
    Xv, yv = train.stack(val)
    T = cfg.time_len
    return train.DataSplit(np.ascontiguousarray(X[:, :, :T]), y, np.ascontiguousarray(Xv[:, :, :T]), yv)


# ---------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig, args) -> int:
    sc = ingest.SynthConfig(
        n_crds=cfg.synth_crds,
        counties_per_crd=cfg.synth_counties,
        start_year=cfg.synth_years[0],
        end_year=cfg.synth_years[1],
        noise_sd=cfg.synth_noise_sd,
    )
    sc.check()
    raw, _ = ingest.generate_synthetic(sc, cfg.synth_seed)
    paths = ingest.write_dataset(raw, Path(cfg.output_dir) / "data")
    print(f"wrote synthetic dataset: {len(raw.counties)} counties, {len(raw.yields)} county-years")
    write_manifest(cfg, "synth", list(paths.values()))
    return 0


def cmd_ingest(cfg: RunConfig, args) -> int:
    raw = _load_raw(cfg)
    years = sorted({r.year for r in raw.yields})
    summary = {
        "counties": len(raw.counties),
        "crds": len(raw.pdsi),
        "county_years": len(raw.yields),
        "weather_seasons": len(raw.weather),
        "years": f"{years[0]}-{years[-1]}" if years else "",
    }
    path = _out(cfg) / "ingest.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(summary, sort_keys=True))
    write_manifest(cfg, "ingest", [path], summary)
    return 0


def cmd_featurize(cfg: RunConfig, args) -> int:
    raw = _load_raw(cfg)
    fs = features.get_feature_set(cfg.features)
    trend = cfg.trend_model()
    out = _out(cfg)
    paths = []
    for name, which in ((TRAIN_CACHE, "train_years"), (TEST_CACHE, "test_years")):
        samples = features.build_samples(raw, trend, fs, cfg.year_list(which))
        if not samples:
            raise DataError(f"no samples in {which} {getattr(cfg, which)}", module="features")
        persist.save_samples(samples, fs, trend, out / name)
        paths.append(out / name)
        print(f"{name}: {len(samples)} samples x {len(fs)} features x {SEASON_DAYS} days")
    write_manifest(cfg, "featurize", paths)
    return 0


def cmd_select(cfg: RunConfig, args) -> int:
    samples, fs, _ = _cache(cfg, TRAIN_CACHE)
    tensor, targets = features.to_tensor(samples, list(fs.generators))
    summary = select.summarize(tensor, targets, args.summary)
    k = len(fs) if args.k is None else args.k
    ranking = select.mrmr_rank(summary, k)
    kept = select.correlation_prune(summary, args.threshold)
    out = _out(cfg)
    select.write_ranking_csv(ranking, out / "ranking.csv")
    (out / "pruned.txt").write_text("".join(f"{n}\n" for n in kept), encoding="utf-8")
    for i, (name, score) in enumerate(ranking, start=1):
        print(f"{i:2d} {name:16s} {score:.4f}")
    write_manifest(cfg, "select", [out / "ranking.csv", out / "pruned.txt"])
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    split = training_split(cfg)
    hp = cfg.hyperparams()
    report = train.train_model(split, hp)
    out = _out(cfg)
    fs = features.get_feature_set(cfg.features)
    persist.save(report.model, cfg.trend_model(), fs, out / MODEL_FILE, hp, cfg.time_len)
    report.write_csv(out / "train_log.csv")
    print(f"best epoch {report.best_epoch}: validation MSE {report.best_val_mse:.4f}")
    write_manifest(cfg, "train", [out / MODEL_FILE, out / "train_log.csv"],
                   {"best_epoch": report.best_epoch, "val_mse": report.best_val_mse})
    return 0


def cmd_search(cfg: RunConfig, args) -> int:
    split = training_split(cfg)
    out = _out(cfg)
    result = train.random_search(
        cfg.search_space(), cfg.trials, cfg.seed, split, jobs=args.jobs,
        log_path=out / TRIAL_LOG, record_wall_time=args.record_wall_time,
    )
    best = result.best
    fs = features.get_feature_set(cfg.features)
    persist.save(best.report.model, cfg.trend_model(), fs, out / MODEL_FILE, best.hp, cfg.time_len)
    print(f"best trial {best.trial}: validation MSE {best.val_mse:.4f} with {best.hp.describe()}")
    write_manifest(cfg, "search", [out / TRIAL_LOG, out / MODEL_FILE],
                   {"best_trial": best.trial, "val_mse": best.val_mse})
    return 0


def _month_T(month: str) -> int:
    try:
        return MONTH_TO_T[month]
    except KeyError:
        raise UsageError(f"--month must be one of {sorted(MONTH_TO_T)}", module="cli") from None


def cmd_predict(cfg: RunConfig, args) -> int:
    T = _month_T(args.month)
    out = _out(cfg)
    ckpt = persist.load(Path(args.model) if args.model else out / MODEL_FILE)
    samples, fs, trend = _cache(cfg, TEST_CACHE)
    if fs.generators != ckpt.feature_set.generators:
        raise ConfigError("test cache and model use different feature sets", module="cli")
    if ckpt.time_len is not None and ckpt.time_len != T:
        log.warning("model was trained on %d days, predicting from %d", ckpt.time_len, T)
    tensor, actual = features.to_tensor(samples, list(fs.generators))
    X = tensor_truncate_time(tensor, T).data
    pred = predict(ckpt.model, X)
    path = out / f"predictions_{args.month}.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "year", "pred_adjusted", "actual_adjusted"])
        for s, p, a in zip(samples, pred, actual):
            w.writerow([s.key, s.year, repr(float(p)), repr(float(a))])
    mse = train.mse(pred, actual)
    print(f"{len(samples)} predictions from days 0..{T - 1}; adjusted-space MSE {mse:.4f}")
    write_manifest(cfg, f"predict_{args.month}", [path], {"time_len": T, "mse_adjusted": mse})
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    pred_path = out / f"predictions_{args.month}.csv"
    if not pred_path.exists():
        raise DataError(f"missing {pred_path}; run `yieldcast predict --month {args.month}` first", module="cli")
    with pred_path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    keys = [r["key"] for r in rows]
    years = [int(r["year"]) for r in rows]
    pred = np.array([float(r["pred_adjusted"]) for r in rows])
    actual = np.array([float(r["actual_adjusted"]) for r in rows])
    weights = {cid: m.harvested_acres for cid, m in ingest.parse_soil_csv(cfg.path("soil")).items()}
    reference = None if cfg.usda == "none" else evaluate.load_usda_reference(cfg.usda or None)
    report = evaluate.build_report(keys, years, pred, actual, cfg.trend_model(), weights, reference)
    county_path, state_path = evaluate.emit_plot_csv(report, out / f"eval_{args.month}")
    baseline = float(np.var(actual))
    summary = {
        "mse_bu_ac": report.mse(),
        "mse_adjusted": report.mse_adjusted,
        "variance_baseline_adjusted": baseline,
        "mse_ratio_adjusted": report.mse_adjusted / baseline if baseline > 0 else None,
        "mse_by_year": {str(y): v for y, v in report.mse_by_year().items()},
        "state_weighting": report.weighting,
        "usda_comparison": [
            {"year": c.year, "actual": c.actual, "usda": c.usda, "model": c.model,
             "usda_error": c.usda_error, "model_error": c.model_error}
            for c in report.comparisons
        ],
        "uncompared_years": report.uncompared_years,
    }
    summary_path = out / f"eval_{args.month}" / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"county MSE {report.mse():.4f} bu/ac^2 (adjusted {report.mse_adjusted:.4f}, "
          f"variance baseline {baseline:.4f}); state weighting: {report.weighting}")
    write_manifest(cfg, f"evaluate_{args.month}", [county_path, state_path, summary_path], summary)
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    worst = 0.0
    failed = 0
    for i in range(args.models):
        layers = 1 + i % 2
        layout = ModelLayout(3, (4,) * layers, 0.0, cfg.cell)
        rep = train.grad_check(layout, seed=cfg.seed + i, eps=1e-5, tolerance=args.tolerance)
        worst = max(worst, rep.max_rel_error)
        failed += not rep.passed
        print(f"model {i}: layers={layers} max rel error {rep.max_rel_error:.3e} ({rep.worst_block})")
    print(f"worst {worst:.3e}; {failed} of {args.models} above {args.tolerance:g}")
    return 0 if failed == 0 else 4


COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "featurize": cmd_featurize,
    "select": cmd_select,
    "train": cmd_train,
    "search": cmd_search,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--out", dest="output_dir", help="output directory")
    common.add_argument("--trend", choices=("percentage", "constant"))
    common.add_argument("--base-year", dest="base_year")
    common.add_argument("--features", choices=sorted(features.FEATURE_SETS))
    common.add_argument("--augment", choices=("none", "pairs", "pairs3"))
    common.add_argument("--augment-strict", dest="augment_strict", action="store_const", const="true")
    common.add_argument("--impute", choices=("none", "linear"))
    common.add_argument("--seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="yieldcast", description="County-level corn yield forecasting pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("synth", "ingest", "featurize", "train"):
        sub.add_parser(name, parents=[common])
    s = sub.add_parser("select", parents=[common])
    s.add_argument("--k", type=int)
    s.add_argument("--threshold", type=float, default=0.9)
    s.add_argument("--summary", choices=("mean", "sum", "max"), default="mean")
    s = sub.add_parser("search", parents=[common])
    s.add_argument("--trials")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--record-wall-time", action="store_true")
    for name in ("predict", "evaluate"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--month", default="final")
        if name == "predict":
            s.add_argument("--model")
    s = sub.add_parser("gradcheck", parents=[common])
    s.add_argument("--models", type=int, default=10)
    s.add_argument("--tolerance", type=float, default=1e-5)
    return p


_FLAG_KEYS = ("output_dir", "trend", "base_year", "features", "augment", "augment_strict", "impute", "seed", "trials")


def config_from_args(args) -> RunConfig:
    overrides = {}
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = str(v)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}", module="cli")
        overrides[key.strip()] = value
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except YieldcastError as exc:
        print(f"yieldcast: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"yieldcast: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
