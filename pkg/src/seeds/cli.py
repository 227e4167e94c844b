"""Command-line entry point: ``seeds <command> [options]``.

Commands
--------
synth        write a synthetic dataset directory
climatology  estimate a day-of-year climatology from a daily series
regrid       interpolate cubed-sphere fields to a lat-lon grid
train        fit a score network on a dataset directory
sample       generate ensembles for held-out days
evaluate     verification metrics of a sampled ensemble (CSV)
spectra      zonal energy spectra of sampled members (CSV)

Usage errors exit with status 2, failures of the numerical modules with
status 1 and a one-line diagnostic on stderr.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import verification as vf
from .climatology import ClimatologyTable, compute_climatology, destandardize
from .config import format_config, load_config
from .container import read_container, write_container
from .errors import ContainerCorruptError, ContainerFormatError, NumericalDivergenceError
from .geo_grid import apply_regrid, build_cubed_sphere, build_regrid_map, latlon_for_cubed_sphere, latlon_grid
from .network import build_score_net, load_score_net, save_score_net
from .spectra import average_spectra, field_spectrum
from .synthetic import SyntheticSpec, make_dataset, read_dataset, write_dataset
from .tasks import (
    EmulationTaskSpec,
    PostprocTaskSpec,
    generate_ensemble,
    prepare_training_data,
    train,
)

log = logging.getLogger("seeds")

METRICS = ("rmse", "acc", "crps", "spread", "spread_corr", "delta", "brier", "logloss")


def _ints(text):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _load_table(path):
    t = read_container(path)
    return ClimatologyTable(mean=t["mean"].astype(float), std=t["std"].astype(float))


# --- commands ---------------------------------------------------------------


def cmd_synth(args):
    n_fields = len(args.amplitude)
    spec = SyntheticSpec(
        C=args.c,
        n_fields=n_fields,
        amplitude=args.amplitude,
        std=args.std if len(args.std) == n_fields else args.std * n_fields,
        corr_length=args.corr_length,
        M=args.m,
        kprime=args.kprime,
        mu=args.mu,
        seed=args.seed,
        lead=args.lead,
        start=args.start,
    )
    ds = make_dataset(spec, args.days, args.mode)
    write_dataset(ds, args.out)
    log.info("wrote %d days to %s", args.days, args.out)


def cmd_climatology(args):
    data = read_container(args.input)
    for key in (args.values_key, args.dates_key):
        if key not in data:
            raise ValueError(f"{args.input} has no tensor {key!r}")
    values = data[args.values_key].astype(float)
    if values.ndim == 2:
        values = values[:, None]
    table = compute_climatology(values, data[args.dates_key].astype(np.int64), window=args.window)
    write_container(args.out, {"mean": table.mean, "std": table.std}, meta={"window": args.window})


def cmd_regrid(args):
    data = read_container(args.input)
    if args.key not in data:
        raise ValueError(f"{args.input} has no tensor {args.key!r}")
    field = data[args.key]
    C = int(round(np.sqrt(field.shape[-1] / 6)))
    if 6 * C * C != field.shape[-1]:
        raise ValueError(f"last axis of {args.key!r} ({field.shape[-1]}) is not a cubed-sphere size")
    cube = build_cubed_sphere(C)
    ll = latlon_grid(args.nlat, args.nlon) if args.nlat else latlon_for_cubed_sphere(C)
    rmap = build_regrid_map(cube.xyz, ll.xyz, k=args.k, power=args.power)
    out = apply_regrid(rmap, field.astype(float))
    write_container(
        args.out,
        {
            args.key: out.reshape(out.shape[:-1] + (ll.nlat, ll.nlon)),
            "lat": ll.lats,
            "lon": ll.lons,
            "map_indices": rmap.indices,
            "map_weights": rmap.weights,
        },
        meta={"source_C": C, "k": args.k, "power": args.power},
    )


def _run_config(args):
    overrides = {k: getattr(args, k, None) for k in ("data", "out", "steps", "seed", "task", "lead",
                                                     "K", "kprime", "batch", "holdout", "lr", "ema", "decay",
                                                     "weighting")}
    return load_config(args.config, **overrides)


def _training_split(cfg, ds):
    n_train = ds.n_days - cfg.holdout
    if n_train < 1:
        raise ValueError(f"holdout={cfg.holdout} leaves no training days out of {ds.n_days}")
    return n_train


def cmd_train(args):
    cfg = _run_config(args)
    if not cfg.data or not cfg.out:
        raise ValueError("train needs data and out paths")
    ds = read_dataset(cfg.data)
    n_train = _training_split(cfg, ds)
    doys = ds.valid_doys()
    data = prepare_training_data(ds.forecast[:n_train], ds.reanalysis[:n_train], ds.climatology,
                                 doys[:n_train], lead=cfg.lead)
    M = ds.forecast.shape[1]
    if cfg.task == "gpp":
        if cfg.kprime > ds.reanalysis.shape[1]:
            raise ValueError(f"kprime={cfg.kprime} but the dataset has {ds.reanalysis.shape[1]} reanalysis members")
        task = PostprocTaskSpec(lead=cfg.lead, K=cfg.K, M=M, kprime=cfg.kprime)
    else:
        task = EmulationTaskSpec(lead=cfg.lead, K=cfg.K, M=M)
    model_cfg = cfg.model_config(ds.forecast.shape[2])
    if model_cfg.C != ds.spec.C:
        raise ValueError(f"model C={model_cfg.C} but data C={ds.spec.C}")
    model = build_score_net(model_cfg, seed=cfg.seed)
    result = train(model, data, task, cfg.steps, batch=cfg.batch, lr=cfg.lr, warmup=cfg.warmup,
                   clip=cfg.clip, seed=cfg.seed, decay=None if cfg.decay == "none" else cfg.decay,
                   ema=cfg.ema, weighting=cfg.weighting, log_every=max(1, cfg.steps // 10), logger=log)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_score_net(out / "model.stnsr", model, task=cfg.task, K=cfg.K, kprime=cfg.kprime,
                   lead=cfg.lead, n_train=n_train)
    write_container(out / "losses.stnsr", {"loss": result.losses})
    (out / "config.txt").write_text(format_config(cfg), encoding="utf-8")


def cmd_sample(args):
    model, meta = load_score_net(args.model)
    ds = read_dataset(args.data)
    K = int(meta.get("K", 2))
    if args.days:
        days = np.array(_ints(args.days))
    else:
        days = np.arange(int(meta.get("n_train", 0)), ds.n_days)
    if len(days) == 0 or days.min() < 0 or days.max() >= ds.n_days:
        raise ValueError(f"no valid evaluation days among 0..{ds.n_days - 1}")
    M = ds.forecast.shape[1]
    if M <= K:
        raise ValueError(f"need more than K={K} forecast members to hold out a reference")
    table = ds.climatology
    doys = ds.valid_doys()[days]
    data = prepare_training_data(ds.forecast[days], ds.reanalysis[days], table, doys)
    rng = np.random.default_rng(args.seed)
    members = []
    for i in range(len(days)):
        anomalies = generate_ensemble(model, data.forecast[i, :K], data.clim[i], n=args.n,
                                      steps=args.sde_steps, rng=rng, batch_size=args.batch)
        members.append(destandardize(anomalies, table, doys[i]))
        log.info("day %d: %d members", int(days[i]), args.n)
    tensors = {
        "ensemble": np.stack(members),
        "seeds": ds.forecast[days, :K],
        "forecast_rest": ds.forecast[days, K:],
        "truth": ds.forecast[days, K],
        "reanalysis": ds.reanalysis[days],
        "day": days,
        "doy": doys,
    }
    write_container(args.out, tensors, meta={"K": K, "lead": meta.get("lead", ds.spec.lead),
                                              "seed": args.seed, "sde_steps": args.sde_steps})


def cmd_evaluate(args):
    data, meta = read_container(args.ensemble, with_meta=True)
    for key in (args.key, args.truth_key, "doy"):
        if key not in data:
            raise ValueError(f"{args.ensemble} has no tensor {key!r}")
    v = data[args.key].astype(float)
    truth = data[args.truth_key].astype(float)
    if v.ndim == 3:
        v = v[:, None]
    table = _load_table(args.climatology)
    clim_mean, clim_std = vf.climatology_fields(table, data["doy"].astype(int))
    n_fields = v.shape[2]
    names = _names(args.fields) if args.fields else tuple(f"field{i}" for i in range(n_fields))
    if len(names) != n_fields:
        raise ValueError(f"{len(names)} field names given for {n_fields} fields")
    lead = int(args.lead if args.lead is not None else meta.get("lead", 0))
    metrics = _names(args.metrics) if args.metrics else METRICS
    unknown = set(metrics) - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics: {', '.join(sorted(unknown))}")
    weights = None
    if args.coslat:
        weights = vf.latitude_weights(build_cubed_sphere(int(round(np.sqrt(v.shape[-1] / 6)))).lat)

    report = vf.MetricReport()
    mean_v = vf.ensemble_mean(v)
    if "rmse" in metrics:
        report.add("rmse", names, lead, vf.summarize(vf.rmse(mean_v, truth, weights)))
    if "acc" in metrics:
        report.add("acc", names, lead, vf.summarize(vf.acc(mean_v, truth, clim_mean, weights)))
    if "crps" in metrics:
        report.add("crps", names, lead, vf.summarize(vf.crps(v, truth).mean(axis=-1)))
    if "spread" in metrics:
        s = vf.ensemble_spread(v)
        report.add("spread", names, lead, vf.summarize(np.sqrt((s**2).mean(axis=-1))))
    if "spread_corr" in metrics:
        if args.reference_key not in data:
            raise ValueError(f"spread_corr needs the {args.reference_key!r} ensemble")
        ref = data[args.reference_key].astype(float)
        report.add("spread_corr", names, lead, vf.summarize(vf.spread_correlation(v, ref, weights)))
    if "delta" in metrics:
        hist = vf.rank_histogram(v, truth, rng=args.seed)
        for i, name in enumerate(names):
            rel = vf.unreliability_delta(hist[i])
            report.add_value("delta", name, lead, rel.global_delta, rel.n)
        if args.hist_out:
            _write_histograms(args.hist_out, hist, names)
    for thr in args.thresholds:
        event = vf.BinaryEventSpec(thr)
        if "brier" in metrics:
            report.add(f"brier{event.label}", names, lead,
                       vf.summarize(vf.brier(v, truth, event, clim_mean, clim_std, weights)))
        if "logloss" in metrics:
            ll = vf.log_loss(v, truth, event, clim_mean, clim_std, conventional=args.conventional,
                             weights=weights)
            report.add(f"logloss{event.label}", names, lead, vf.summarize(ll))
    _write_text(args.out, report.to_csv())


def _write_histograms(path, hist, names):
    M = hist.shape[-1] - 1
    lines = ["field," + ",".join(f"rank{i}" for i in range(M + 1))]
    for i, name in enumerate(names):
        total = hist[i].sum(axis=0)
        lines.append(name + "," + ",".join(str(int(c)) for c in total))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_spectra(args):
    data = read_container(args.input)
    if args.key not in data:
        raise ValueError(f"{args.input} has no tensor {args.key!r}")
    v = data[args.key].astype(float)
    if v.ndim == 3:
        v = v[:, None]
    if not 0 <= args.field < v.shape[2]:
        raise ValueError(f"field index {args.field} out of range")
    C = int(round(np.sqrt(v.shape[-1] / 6)))
    cube = build_cubed_sphere(C)
    ll = latlon_for_cubed_sphere(C)
    rmap = build_regrid_map(cube.xyz, ll.xyz)
    members = min(v.shape[1], args.members) if args.members else v.shape[1]
    per_member = []
    for m in range(members):
        days = [field_spectrum(v[t, m, args.field], cube, ll, regrid_map=rmap) for t in range(len(v))]
        per_member.append(average_spectra(days))
    report = average_spectra(per_member, keep_members=True)
    _write_text(args.out, report.to_csv())


# --- parser -----------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="seeds", description="Seed-conditioned ensemble sampler tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--days", type=int, default=8)
    s.add_argument("--m", type=int, default=5)
    s.add_argument("--kprime", type=int, default=3)
    s.add_argument("--mode", choices=("emulation", "mixture"), default="emulation")
    s.add_argument("--c", type=int, default=8)
    s.add_argument("--amplitude", type=_floats, default=(10.0, 5.0))
    s.add_argument("--std", type=_floats, default=(2.0, 1.0))
    s.add_argument("--corr-length", type=float, default=0.5)
    s.add_argument("--mu", type=float, default=1.0)
    s.add_argument("--lead", type=int, default=1)
    s.add_argument("--start", default="2000-01-01")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("climatology", help="day-of-year climatology of a daily series")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--values-key", default="values")
    s.add_argument("--dates-key", default="date")
    s.add_argument("--window", type=int, default=15)
    s.set_defaults(func=cmd_climatology)

    s = sub.add_parser("regrid", help="cubed sphere to lat-lon")
    s.add_argument("--input", required=True)
    s.add_argument("--key", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--nlat", type=int, default=0)
    s.add_argument("--nlon", type=int, default=None)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--power", type=float, default=1.0)
    s.set_defaults(func=cmd_regrid)

    s = sub.add_parser("train", help="train a score network")
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--task", choices=("gee", "gpp"))
    s.add_argument("--steps", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--ema", type=float, help="weight moving-average decay (0 disables)")
    s.add_argument("--decay", choices=("cosine", "none"), help="learning-rate decay after warm-up")
    s.add_argument("--weighting", choices=("unit", "edm"), help="per-noise-level loss weighting")
    s.add_argument("--lead", type=int)
    s.add_argument("--K", type=int)
    s.add_argument("--kprime", type=int)
    s.add_argument("--holdout", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate ensembles for held-out days")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--days", default="", help="comma-separated day indices (default: held-out days)")
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--sde-steps", type=int, default=256)
    s.add_argument("--batch", type=int, default=512)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("evaluate", help="verification metrics as CSV")
    s.add_argument("--ensemble", required=True)
    s.add_argument("--climatology", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--hist-out")
    s.add_argument("--key", default="ensemble")
    s.add_argument("--truth-key", default="truth")
    s.add_argument("--reference-key", default="forecast_rest")
    s.add_argument("--metrics", default="", help=f"comma-separated subset of {','.join(METRICS)}")
    s.add_argument("--thresholds", type=_floats, default=(2.0, -2.0))
    s.add_argument("--fields", default="")
    s.add_argument("--lead", type=int)
    s.add_argument("--conventional", action="store_true",
                   help="log-loss with the reference label weighting the log probabilities")
    s.add_argument("--coslat", action="store_true", help="cos-latitude weighted spatial means")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("spectra", help="zonal energy spectra as CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--out", default="-")
    s.add_argument("--key", default="ensemble")
    s.add_argument("--field", type=int, default=0)
    s.add_argument("--members", type=int, default=0, help="limit to the first N members")
    s.set_defaults(func=cmd_spectra)
    return p


MODULE_ERRORS = (
    ValueError,
    TypeError,
    KeyError,
    OSError,
    FloatingPointError,
    ContainerFormatError,
    ContainerCorruptError,
    NumericalDivergenceError,
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except MODULE_ERRORS as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"seeds {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
