"""Command-line entry point for the whole pipeline.

Subcommands: prepare, train, sample, diffuse, compose-study, serve,
score, gradcheck.  Every run prints its resolved configuration
(including seeds) as one JSON line before acting.  A --config JSON file
may hold any flag value (keys are flag names with dashes as
underscores); explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset, gan, imgproc, study, synthetic
from .nn.gradcheck import run_default_suite

CEILINGS = gan.ITERATION_CEILINGS


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "cmd", None):
        parser.print_help()
        return 2
    try:
        resolved = resolve_config(args)
        # stderr so that subcommands with machine-readable stdout stay pipeable
        print("config: " + json.dumps(resolved, sort_keys=True, default=str),
              file=sys.stderr)
        return args.func(resolved)
    except CliError as e:
        print(f'error: code={e.code} message="{e}"', file=sys.stderr)
        return 1
    except (ValueError, KeyError, FileNotFoundError, OSError) as e:
        print(f'error: code={type(e).__name__} message="{e}"', file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noduleforge",
        description="Nodule GAN pipeline: data prep, training, sampling, "
                    "diffusion, blinded study composition, serving, scoring.")
    sub = parser.add_subparsers(dest="cmd")

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed for every random choice (default 0)")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file of flag defaults; explicit flags win")

    p = sub.add_parser("prepare", help="filter a manifest into a training pool")
    common(p)
    p.add_argument("--manifest", type=Path, required=True,
                   help="CSV: nodule_id, patch_path, diameter_mm, ratings")
    p.add_argument("--out", type=Path, required=True, help="pool output directory")
    p.add_argument("--diffuse", action="store_true",
                   help="apply Perona-Malik before normalization")
    _diffusion_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser(
        "train", help="train a GAN on a prepared pool",
        description=f"Defaults follow the published presets: batch 64, "
                    f"discriminator lr 1e-4, generator lr 2e-4, iteration "
                    f"ceilings benign {CEILINGS['benign']}, malignant "
                    f"{CEILINGS['malignant']}, mixed {CEILINGS['mixed']}.")
    common(p)
    p.add_argument("--pool", type=Path, required=True, help="pool directory from prepare")
    p.add_argument("--out", type=Path, required=True, help="run output directory")
    p.add_argument("--class", dest="class_mode",
                   choices=("benign", "malignant", "mixed"), default=None,
                   help="training subset (default mixed); sets the iteration "
                        f"ceiling: benign {CEILINGS['benign']}, malignant "
                        f"{CEILINGS['malignant']}, mixed {CEILINGS['mixed']}")
    p.add_argument("--iters", type=int, default=None,
                   help="iteration count override (default: class ceiling)")
    p.add_argument("--batch", type=int, default=None, help="batch size (default 64)")
    p.add_argument("--lr-d", type=float, default=None,
                   help="discriminator learning rate (default 1e-4)")
    p.add_argument("--lr-g", type=float, default=None,
                   help="generator learning rate (default 2e-4)")
    p.add_argument("--checkpoint-every", type=int, default=None,
                   help="checkpoint cadence in iterations (default 10000)")
    p.add_argument("--log-every", type=int, default=None,
                   help="metrics log cadence in iterations (default 100)")
    p.add_argument("--dtype", choices=("float32", "float64"), default=None,
                   help="training precision (default float64)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw patches from a trained generator")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help=".nfck checkpoint")
    p.add_argument("--n", type=int, default=None, help="sample count (default 36)")
    p.add_argument("--out", type=Path, required=True, help="sample output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("diffuse", help="Perona-Malik filter an 8-bit image")
    common(p)
    p.add_argument("--input", type=Path, required=True, help="PNG/PGM input")
    p.add_argument("--out", type=Path, required=True, help="output image path")
    _diffusion_flags(p)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("compose-study",
                       help="assemble the 18-experiment blinded study")
    common(p)
    p.add_argument("--real", type=Path, required=True, help="pool dir from prepare")
    p.add_argument("--gen-benign", type=Path, required=True,
                   help="sample dir (benign model)")
    p.add_argument("--gen-malignant", type=Path, required=True,
                   help="sample dir (malignant model)")
    p.add_argument("--gen-mixed", type=Path, required=True,
                   help="sample dir (mixed model)")
    p.add_argument("--out", type=Path, required=True, help="study store directory")
    p.add_argument("--study-id", default=None, help="study identifier (default s1)")
    p.add_argument("--owner-token", default=None,
                   help="shared secret for the scoring endpoint")
    p.add_argument("--diffuse", action="store_true",
                   help="apply Perona-Malik to the displayed images")
    _diffusion_flags(p)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("serve", help="serve a study over HTTP")
    common(p)
    p.add_argument("--study", type=Path, required=True, help="study store directory")
    p.add_argument("--port", type=int, default=None, help="TCP port (default 8765)")
    p.add_argument("--host", default=None, help="bind address (default 127.0.0.1)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("score", help="lock and score a study offline")
    common(p)
    p.add_argument("--study", type=Path, required=True, help="study store directory")
    p.add_argument("--force", action="store_true",
                   help="force-lock open sessions before scoring")
    p.add_argument("--out", type=Path, default=None,
                   help="also write the report to this path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every layer gradient")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-synthetic",
                       help="write the seeded blob/ring fixture dataset")
    common(p)
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    p.add_argument("--per-class", type=int, default=None,
                   help="images per class (default 512)")
    p.set_defaults(func=cmd_make_synthetic)

    return parser


def _diffusion_flags(p):
    p.add_argument("--kappa", type=float, default=None,
                   help="diffusion edge threshold (default 30, 8-bit scale)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="diffusion step size in (0, 0.25] (default 0.25)")
    p.add_argument("--diffusion-iters", type=int, default=None,
                   help="diffusion iterations (default 5)")
    p.add_argument("--conductance", choices=imgproc.CONDUCTANCE_KINDS, default=None,
                   help="conductance variant (default exponential)")


DEFAULTS = {
    "seed": 0,
    "n": 36,
    "batch": gan.DEFAULT_BATCH_SIZE,
    "lr_d": gan.DEFAULT_LR_D,
    "lr_g": gan.DEFAULT_LR_G,
    "class_mode": "mixed",
    "checkpoint_every": 10_000,
    "log_every": 100,
    "dtype": "float64",
    "kappa": 30.0,
    "lam": 0.25,
    "diffusion_iters": 5,
    "conductance": "exponential",
    "port": 8765,
    "host": "127.0.0.1",
    "study_id": "s1",
    "owner_token": None,
    "per_class": 512,
    "iters": None,
}


def resolve_config(args) -> dict:
    """Merge flag values over --config file values over built-in defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        file_cfg = json.loads(Path(args.config).read_text())
        if not isinstance(file_cfg, dict):
            raise CliError("bad_config", f"{args.config} must hold a JSON object")
    resolved = {"cmd": args.cmd}
    skip = {"cmd", "func", "config"}
    for key, val in vars(args).items():
        if key in skip:
            continue
        if val is None or val is False:
            if key in file_cfg:
                val = file_cfg[key]
            elif val is None and key in DEFAULTS:
                val = DEFAULTS[key]
        resolved[key] = val
    return resolved


def _diffusion_from(cfg) -> imgproc.DiffusionConfig:
    return imgproc.DiffusionConfig(iterations=cfg["diffusion_iters"],
                                   kappa=cfg["kappa"], lam=cfg["lam"],
                                   conductance=cfg["conductance"])


def cmd_prepare(cfg) -> int:
    parsed = dataset.parse_annotations(cfg["manifest"])
    for err in parsed.errors:
        print(f"row error: {err}", file=sys.stderr)
    diffusion = _diffusion_from(cfg) if cfg["diffuse"] else None

    def loader(ann):
        return dataset.default_patch_loader(ann, diffusion=diffusion)

    result = dataset.consensus_filter(parsed.annotations, loader)
    out = dataset.write_pool(result, cfg["out"])
    by_label = {"benign": 0, "malignant": 0}
    for n in result.kept:
        by_label[n.label] += 1
    print(f"parsed: {parsed.summary()}")
    print(f"kept: {len(result.kept)} ({by_label['benign']} benign, "
          f"{by_label['malignant']} malignant); excluded: {len(result.excluded)}")
    print(f"pool written to {out}")
    return 0


def cmd_train(cfg) -> int:
    pool = dataset.load_pool(cfg["pool"])
    config = gan.TrainConfig(
        class_mode=cfg["class_mode"], batch_size=cfg["batch"],
        lr_d=cfg["lr_d"], lr_g=cfg["lr_g"], max_iterations=cfg["iters"],
        seed=cfg["seed"], checkpoint_every=cfg["checkpoint_every"],
        log_every=cfg["log_every"])
    gan_config = gan.GanConfig(dtype=cfg["dtype"])
    result = gan.train(pool, config, cfg["out"], gan_config)
    print(f"trained {config.iterations} iterations; "
          f"{len(result.checkpoints)} checkpoints in {cfg['out']}")
    print(f"final checkpoint: {result.checkpoints[-1]}")
    print(f"metrics log: {result.metrics_path}")
    return 0


def cmd_sample(cfg) -> int:
    gen, _, sidecar = gan.load_nets(cfg["checkpoint"])
    patches = gan.sample(gen, cfg["n"], cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    arr = np.stack([p.pixels for p in patches])
    np.save(out / "samples.npy", arr)
    for p in patches:
        fname = f"{p.source_id}.png"
        imgproc.write_grayscale(out / fname, imgproc.denormalize(p.pixels))
        rows.append({"source_id": p.source_id, "label": p.label,
                     "seed": p.seed, "file": fname})
    (out / "samples.json").write_text(json.dumps({
        "class_mode": sidecar["class_mode"],
        "checkpoint": str(cfg["checkpoint"]),
        "seed": cfg["seed"],
        "samples": rows,
    }, indent=2))
    print(f"wrote {len(patches)} samples to {out}")
    return 0


def cmd_diffuse(cfg) -> int:
    img = imgproc.read_grayscale(cfg["input"]).astype(float)
    result = imgproc.perona_malik(img, _diffusion_from(cfg))
    imgproc.write_grayscale(cfg["out"], np.clip(np.round(result), 0, 255).astype(np.uint8))
    print(f"diffused {cfg['input']} -> {cfg['out']}")
    return 0


def load_samples(sample_dir) -> list[dataset.ImagePatch]:
    """Read a sample directory written by the sample subcommand."""
    sample_dir = Path(sample_dir)
    meta = json.loads((sample_dir / "samples.json").read_text())
    arr = np.load(sample_dir / "samples.npy")
    out = []
    for i, row in enumerate(meta["samples"]):
        out.append(dataset.ImagePatch(arr[i], provenance="generated",
                                      source_id=row["source_id"],
                                      label=row["label"], seed=row["seed"]))
    return out


def cmd_compose(cfg) -> int:
    from .service import DEFAULT_OWNER_TOKEN, StudyStore

    real = dataset.load_pool(cfg["real"])
    pools = {
        "benign": load_samples(cfg["gen_benign"]),
        "malignant": load_samples(cfg["gen_malignant"]),
        "mixed": load_samples(cfg["gen_mixed"]),
    }
    plan, patch_table = study.compose_study(real, pools, cfg["seed"])
    diffusion = _diffusion_from(cfg) if cfg["diffuse"] else None
    StudyStore.initialize(cfg["out"], cfg["study_id"], plan, patch_table,
                          owner_token=cfg["owner_token"] or DEFAULT_OWNER_TOKEN,
                          display_diffusion=diffusion)
    reuse = "with" if plan.reuse_across_experiments else "without"
    print(f"study {cfg['study_id']}: 18 experiments x 36 cells "
          f"({len(patch_table)} distinct images, {reuse} cross-experiment reuse)")
    print(f"store written to {cfg['out']}")
    return 0


def cmd_serve(cfg) -> int:
    from .service import StudyStore, serve

    store = StudyStore(cfg["study"])
    print(f"serving study {store.study_id} on {cfg['host']}:{cfg['port']}")
    serve(store, host=cfg["host"], port=cfg["port"])
    return 0


def cmd_score(cfg) -> int:
    from .service import ServiceError, StudyStore

    store = StudyStore(cfg["study"])
    try:
        blob = store.score(force=cfg["force"])
    except ServiceError as e:
        raise CliError(e.code, e.message) from e
    if cfg["out"]:
        Path(cfg["out"]).write_bytes(blob)
    sys.stdout.write(blob.decode())
    return 0


def cmd_gradcheck(cfg) -> int:
    results = run_default_suite()
    ok = True
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:26s} max_rel_err={r.max_rel_err:.3e} "
              f"tol={r.tolerance:g} {status}")
        ok = ok and r.ok
    print(f"gradcheck: {'all passed' if ok else 'FAILURES'}")
    return 0 if ok else 1


def cmd_make_synthetic(cfg) -> int:
    manifest = synthetic.write_synthetic_dataset(cfg["out"], cfg["per_class"],
                                                 cfg["seed"])
    print(f"synthetic dataset manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
