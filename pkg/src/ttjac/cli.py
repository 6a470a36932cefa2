"""ttjac command-line tool.

Subcommands: sample, fit, eval, probe, truncate. Exit codes: 0 success,
2 configuration error, 3 data/format error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings

import numpy as np

from . import streams
from .config import RunConfig, load_config, load_generator
from .errors import ConfigError, InputError, NumericalError, TTJacError
from .fit import (
    AlsConfig, EmptyCellWarning, FitReport, als_init, anova_to_tt, fit_als, fit_anova1,
    fit_report_mse, standardization, standardize,
)
from .grid import build_equal_mass_grid, quantize
from .jacobian import build_sample_set
from .model import ScoreModel
from .probe import (
    pairwise_matrix_from_samples, pairwise_matrix_from_tt, random_pairs, spectrum,
    suggest_rank, write_spectrum_csv,
)
from .samples import (
    SampleSet, export_samples_csv, read_latents_csv, read_samples, write_samples,
    write_scores_csv,
)
from .truncation import (
    EXACT_SCORE, LATENT_NORM, TT_SCORE, sweep_tradeoff, write_curve_csv,
)

log = logging.getLogger("ttjac")


def _config(args) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "threads": args.threads,
    }
    for name in ("d", "grid_size", "tail_mass", "sample_count", "generator", "als_rank",
                 "als_sweeps", "als_ridge", "holdout_fraction"):
        overrides[name] = getattr(args, name, None)
    cfg = load_config(args.config, overrides)
    log.debug("config: %s", cfg)
    return cfg


def cmd_sample(args) -> int:
    cfg = _config(args)
    gen, feat = load_generator(cfg.generator, cfg.d, cfg.seed)
    grid = build_equal_mass_grid(cfg.grid_size, cfg.tail_mass)
    samples = build_sample_set(gen, feat, grid, cfg.sample_count, seed=cfg.seed,
                               threads=cfg.threads)
    write_samples(samples, args.out)
    if args.csv:
        export_samples_csv(samples, args.csv)
    print(f"M={samples.m} d={samples.d} N={grid.n_cells} "
          f"score_mean={samples.values.mean():.6g} score_std={samples.values.std():.6g}")
    return 0


def _split(samples: SampleSet, fraction: float, seed: int):
    if fraction <= 0.0 or samples.m < 2:
        return samples, None
    n_hold = max(1, int(round(fraction * samples.m)))
    perm = streams.rng(seed, "holdout").permutation(samples.m)
    return samples.subset(np.sort(perm[n_hold:])), samples.subset(np.sort(perm[:n_hold]))


def _probe_spectra(t_or_samples, d: int, count: int, seed: int):
    pairs = random_pairs(d, count, streams.rng(seed, "probe"))
    out = []
    for k1, k2 in pairs:
        if isinstance(t_or_samples, SampleSet):
            pm = pairwise_matrix_from_samples(t_or_samples, k1, k2)
        else:
            pm = pairwise_matrix_from_tt(t_or_samples, k1, k2)
        out.append(((k1, k2), spectrum(pm)))
    return out


def cmd_fit(args) -> int:
    samples = read_samples(args.samples)
    cfg = _config(args)
    if samples.d < 2:
        raise InputError("fitting needs d >= 2")
    train, holdout = _split(samples, cfg.holdout_fraction, cfg.seed)
    mean, std = standardization(train.values)
    train_std = standardize(train, mean, std)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyCellWarning)
        anova = fit_anova1(train_std)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    tensor = anova_to_tt(anova)
    anova_rmse = float(np.sqrt(fit_report_mse(tensor, train_std)))
    report = FitReport(rmse=[anova_rmse], underdetermined_slices=[0])

    rank = cfg.als_rank
    if rank == "auto":
        spectra = _probe_spectra(train_std, train.d, 10, cfg.seed)
        rank = str(max(2, suggest_rank([s for _, s in spectra], 0.99)))
        print(f"rank probe suggests rank {rank}")
    if int(rank) > 0:
        als_cfg = AlsConfig(rank=int(rank), sweeps=cfg.als_sweeps, ridge=cfg.als_ridge,
                            seed=cfg.seed)
        init = als_init(train_std, als_cfg.rank, seed=cfg.seed)
        tensor, report = fit_als(train_std, init, als_cfg)
        if report.flagged:
            print(f"warning: {len(report.flagged)} slices have fewer samples than unknowns, "
                  f"first (k, i) = {report.flagged[0]}", file=sys.stderr)

    model = ScoreModel(samples.grid, tensor, mean, std, samples.generator_tag,
                       train.m, cfg.fit_hash())
    model.save(args.out)
    if args.report:
        report.write_csv(args.report)
    msg = f"train_rmse={report.rmse[-1]:.6g} ranks={list(tensor.ranks)}"
    if holdout is not None:
        mse = fit_report_mse(tensor, holdout, (mean, std))
        msg += f" holdout_mse={mse:.6g}"
        if args.mse_bound is not None and mse > args.mse_bound:
            print(msg)
            raise NumericalError(f"holdout MSE {mse:.6g} exceeds bound {args.mse_bound}")
    print(msg)
    return 0


def cmd_eval(args) -> int:
    model = ScoreModel.load(args.model)
    latents = read_latents_csv(args.latents)
    if latents.size == 0:
        write_scores_csv(args.out, np.zeros((0, model.d)), np.zeros((0, model.d), int), np.zeros(0))
        return 0
    if latents.shape[1] != model.d:
        raise InputError(f"latents have d={latents.shape[1]}, model expects d={model.d}")

    idx = quantize(latents, model.grid)
    write_scores_csv(args.out, latents, idx, model.lookup(idx))
    return 0


def cmd_probe(args) -> int:
    if (args.samples is None) == (args.model is None):
        raise ConfigError("pass exactly one of --samples or --model")
    if args.samples is not None:
        source = read_samples(args.samples)
        d = source.d
    else:
        source = ScoreModel.load(args.model).tensor
        d = source.d
    if d < 2:
        raise InputError("rank probe needs d >= 2")
    seed = 0 if args.seed is None else args.seed
    spectra = _probe_spectra(source, d, args.pairs, seed)
    write_spectrum_csv(args.out, spectra)
    print(f"pairs={len(spectra)} suggested_rank={suggest_rank([s for _, s in spectra], args.energy)}")
    return 0


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_truncate(args) -> int:
    model = ScoreModel.load(args.model)
    samples = read_samples(args.samples)
    reference = read_samples(args.reference)
    cfg = _config(args)
    gen, feat = load_generator(cfg.generator, samples.d, cfg.seed)
    ref_gen, ref_feat = (gen, feat) if args.reference_generator is None else \
        load_generator(args.reference_generator, reference.d, cfg.seed)
    gen_feats = feat.forward(gen(samples.latents))[0]
    real_feats = ref_feat.forward(ref_gen(reference.latents))[0]
    criteria = [TT_SCORE, LATENT_NORM] + ([EXACT_SCORE] if args.exact else [])
    fractions = _parse_floats(args.fractions)
    curves = sweep_tradeoff(samples, gen_feats, real_feats, criteria, fractions=fractions,
                            k=args.k, model=model)
    write_curve_csv(args.out, curves)
    print(" ".join(f"{k}:{len(v)}pts" for k, v in curves.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttjac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML config file; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    s = sub.add_parser("sample", help="draw latents, score them, write a TTS1 file")
    common(s)
    s.add_argument("--generator", help="generator JSON file or preset name")
    s.add_argument("--d", type=int)
    s.add_argument("--grid-size", type=int)
    s.add_argument("--tail-mass", type=float)
    s.add_argument("--samples", "-m", dest="sample_count", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="also export the samples as CSV")
    s.set_defaults(func=cmd_sample)

    f = sub.add_parser("fit", help="fit a TT score model to a sample file")
    common(f)
    f.add_argument("--samples", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--report", help="fit report CSV")
    f.add_argument("--rank", dest="als_rank", help="ALS rank, 0 for ANOVA only, or 'auto'")
    f.add_argument("--sweeps", dest="als_sweeps", type=int)
    f.add_argument("--ridge", dest="als_ridge", type=float)
    f.add_argument("--holdout-fraction", type=float)
    f.add_argument("--mse-bound", type=float, help="fail (exit 4) if holdout MSE exceeds this")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score latents from a CSV with a model")
    e.add_argument("--model", required=True)
    e.add_argument("--latents", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("probe", help="pairwise-dependency spectra and rank suggestion")
    pr.add_argument("--samples")
    pr.add_argument("--model")
    pr.add_argument("--pairs", type=int, default=10)
    pr.add_argument("--energy", type=float, default=0.99)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_probe)

    t = sub.add_parser("truncate", help="precision/recall sweep: TT score vs latent norm")
    common(t)
    t.add_argument("--model", required=True)
    t.add_argument("--samples", required=True)
    t.add_argument("--reference", required=True, help="TTS1 file of reference latents")
    t.add_argument("--generator", help="generator embedding the samples")
    t.add_argument("--reference-generator", help="generator embedding the reference")
    t.add_argument("--fractions", default=",".join(f"{f:.2f}" for f in np.linspace(1.0, 0.2, 17)))
    t.add_argument("--k", type=int, default=3)
    t.add_argument("--exact", action="store_true", help="add the exact-score curve")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_truncate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TTJacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
