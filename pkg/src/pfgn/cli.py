"""Command line: gen-data, train, sample, eval, robust.

Every command reads an optional JSON config (``--config``), applies the
flags on top, and writes its outputs plus a ``<command>_run.json`` record
(including the seed) under ``--out``.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint, data, diffusion, evaluation, pointnet
from .baseline import BaselineModel
from .config import load_config
from .errors import EXIT_CODES, ConfigError, PfgnError
from .flow import FlowMatchingModel
from .rng import ALGORITHM, Stream, derive_seed
from .training import PROCESSES, TrainConfig, Trainer

log = logging.getLogger("pfgn")


def _fractions(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _ids(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad geometry id list {text!r}") from None


def make_parser():
    parser = argparse.ArgumentParser(prog="pfgn", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="global seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", dest="data_dir", help="dataset directory")
    common.add_argument("--model", choices=sorted(PROCESSES), help="model kind")
    common.add_argument("--checkpoint", help="checkpoint path")
    common.add_argument("--samples", type=int, help="samples per geometry")
    common.add_argument("--steps", dest="n_steps", type=int, help="flow-matching Euler steps")
    common.add_argument("--fractions", type=_fractions, help="comma-separated drop fractions")
    common.add_argument("--split", dest="eval_split", choices=data.SPLITS, help="split to evaluate")
    common.add_argument("--geometry", type=_ids, help="comma-separated geometry ids")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("gen-data", "build and save the synthetic dataset"),
                        ("train", "train a model and write a checkpoint"),
                        ("sample", "draw field samples for chosen geometries"),
                        ("eval", "relative L2 errors and pressure forces"),
                        ("robust", "errors after randomly removing points")]:
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def resolve_config(args):
    cfg = load_config(args.config)
    for key in ("seed", "out", "data_dir", "model", "checkpoint", "samples", "n_steps",
                "fractions", "eval_split", "geometry"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if cfg.model not in PROCESSES:
        raise ConfigError(f"unknown model {cfg.model!r}")
    return cfg


def _record(cfg, command, extra=None):
    os.makedirs(cfg.out, exist_ok=True)
    rec = {"command": command, "seed": cfg.seed, "rng": ALGORITHM, "config": cfg.to_dict()}
    rec.update(extra or {})
    path = os.path.join(cfg.out, f"{command}_run.json")
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, default=str)
    return path


def cmd_gen_data(cfg):
    flow = data.FlowConfig(cfg.rho, cfg.mu, cfg.u_inf, cfg.p0)
    ds = data.build_dataset(cfg.n_geoms, tuple(cfg.split), cfg.seed, cfg.n_points, cfg.n_surface, flow,
                            base_size=cfg.base_size, aspect=tuple(cfg.aspect),
                            superellipse_m=cfg.superellipse_m)
    manifest = data.save_dataset(ds, cfg.data_dir)
    _record(cfg, "gen-data", {"manifest": manifest, "checksum": ds.checksum()})
    log.info("wrote %d geometries to %s", len(ds.samples), cfg.data_dir)
    return ds


def checkpoint_path(cfg):
    return cfg.checkpoint or os.path.join(cfg.out, f"model_{cfg.model}.pfgn")


def cmd_train(cfg):
    ds = data.load_dataset(cfg.data_dir)
    kind = PROCESSES[cfg.model]
    params = pointnet.build(kind, 2, cfg.d_emb, 3, derive_seed(cfg.seed, "init"), cfg.width_divisor)
    os.makedirs(cfg.out, exist_ok=True)
    tcfg = TrainConfig(cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.max_steps, cfg.seed, kind,
                       T=cfg.T, r=cfg.r, log_path=os.path.join(cfg.out, f"train_log_{cfg.model}.csv"))
    trainer = Trainer(params, tcfg, ds)
    means = trainer.fit()
    meta = {"seed": cfg.seed, "n_steps": cfg.n_steps, "T": cfg.T, "r": cfg.r, "steps": trainer.state.step}
    path = checkpoint.save(checkpoint_path(cfg), params, ds.stats, meta)
    _record(cfg, "train", {"checkpoint": path, "epoch_losses": means,
                           "parameters": pointnet.count_parameters(params)})
    log.info("trained %s for %d steps -> %s", kind, trainer.state.step, path)
    return params


def load_model(cfg):
    """Checkpoint -> (generator, params, stats, meta)."""
    params, stats, meta = checkpoint.load(checkpoint_path(cfg))
    if params.kind == "flow_matching":
        model = FlowMatchingModel(params, cfg.n_steps)
    elif params.kind == "diffusion":
        model = diffusion.DiffusionModel(params, diffusion.build_schedule(meta.get("T", cfg.T),
                                                                          meta.get("r", cfg.r)))
    else:
        model = BaselineModel(params)
    return model, params, stats, meta


def _dataset_for(cfg, stats):
    ds = data.load_dataset(cfg.data_dir)
    if stats is not None:
        ds.stats = stats
    return ds


def cmd_sample(cfg):
    model, params, stats, _ = load_model(cfg)
    ds = _dataset_for(cfg, stats)
    ids = cfg.geometry or ds.splits[cfg.eval_split][:1]
    by_id = {s.gid: s for s in ds.samples}
    written = []
    for gid in ids:
        if gid not in by_id:
            raise ConfigError(f"no geometry {gid} in dataset")
        s = by_id[gid]
        rng = Stream(derive_seed(cfg.seed, gid))
        S = cfg.samples if model.stochastic else 1
        pred = ds.to_physical(model.generate(ds.inputs(s), S, rng))
        for k in range(S):
            path = os.path.join(cfg.out, f"fields_g{gid}_s{k}.csv")
            evaluation.export_fields(s.coords, pred[k], s.fields, path)
            prof = evaluation.surface_profile(s.cloud, pred[k])
            evaluation.export_surface_profile(prof, os.path.join(cfg.out, f"surface_g{gid}_s{k}.csv"))
            written.append(path)
    _record(cfg, "sample", {"files": written})
    return written


def cmd_eval(cfg):
    model, params, stats, _ = load_model(cfg)
    ds = _dataset_for(cfg, stats)
    report = evaluation.evaluate_model(model, ds, cfg.eval_split, cfg.samples, cfg.seed)
    note = f"seed={cfg.seed}; forces are pressure-only, in N per unit span"
    evaluation.export_metrics(report, os.path.join(cfg.out, "metrics.csv"), note)
    evaluation.export_histogram(report, os.path.join(cfg.out, "histogram.csv"))
    evaluation.export_forces(report, os.path.join(cfg.out, "forces.csv"))
    _record(cfg, "eval", {"aggregate": report.aggregate(), "forces": report.forces.aggregate()})
    return report


def cmd_robust(cfg):
    model, params, stats, _ = load_model(cfg)
    ds = _dataset_for(cfg, stats)
    table = evaluation.robustness_eval(model, ds, cfg.eval_split, cfg.fractions, cfg.samples, cfg.seed)
    evaluation.export_robustness(table, os.path.join(cfg.out, "robustness.csv"))
    _record(cfg, "robust", {"table": [{k: v for k, v in r.items() if k != "report"} for r in table]})
    return table


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "sample": cmd_sample,
            "eval": cmd_eval, "robust": cmd_robust}


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        COMMANDS[args.command](cfg)
    except PfgnError as exc:
        print(f"pfgn: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
