"""Command-line entry point: train, detect, evaluate, promote, cose, ablate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import evaluation
from .config import RunConfig, load_config_file
from .errors import DecodeError, FeatureMissing, LayoutMismatch, SuperDiffError
from .estimator import prepare_image, prepare_images
from .ingest import (
    DatasetIndex,
    index_dataset,
    load_feature_bank,
    load_gray_map,
    load_sample,
    save_gray_map,
    split_train_test,
)
from .superpixel import segment
from .train import (
    WeightVector,
    fit_weights,
    infer,
    load_weights,
    node_ground_truth,
    save_weights,
    training_loss,
)

logger = logging.getLogger("superdiff")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--dataset-root", dest="dataset_root")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--color-spaces", dest="color_spaces", help="comma list, e.g. Lab,RGB")
    parser.add_argument("--sigma2", dest="sigma2_values", help="comma list of scales")
    parser.add_argument(
        "--gaussian-variances", dest="gaussian_variances", help="comma list of seed variances"
    )
    parser.add_argument("--n-superpixels", dest="n_superpixels", type=int)
    parser.add_argument("--compactness", dest="compactness", type=float)
    parser.add_argument("--var-threshold", dest="var_threshold", type=float)
    parser.add_argument(
        "--paper-variance",
        action="store_const",
        const="paper",
        dest="variance_mode",
        help="rescale eigenvectors to [0,255] and filter at variance 300",
    )
    parser.add_argument("--l-max", dest="l_max", type=int)
    parser.add_argument("--squared-affinity", action="store_const", const=True, dest="squared_affinity")
    parser.add_argument("--eigvec-norm", dest="eigvec_norm", choices=("euclidean", "d-orthonormal"))
    parser.add_argument("--use-features", action="store_const", const=True, dest="use_features")
    parser.add_argument("--seed", dest="seed_of_rng", type=int)
    parser.add_argument(
        "--jobs",
        dest="jobs",
        type=int,
        help="worker pool size (default: env SUPERDIFF_JOBS or 1)",
    )


def build_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        config = load_config_file(args.config, config)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name in ("color_spaces", "sigma2_values", "gaussian_variances") and isinstance(
            value, str
        ):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            value = tuple(parts) if f.name == "color_spaces" else tuple(float(p) for p in parts)
        setattr(config, f.name, value)
    if getattr(args, "jobs", None) is None:
        config.jobs = int(os.environ.get("SUPERDIFF_JOBS", "1"))
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(config: RunConfig, command: str, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "settings_hash": config.settings_hash(),
        "config": config.as_dict(),
        "outputs": sorted(outputs),
    }
    path = _out_dir(config) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _feature_bank_for(index: DatasetIndex, sample_id: str, seg, required: bool):
    path = index.features_for(sample_id)
    if path is None:
        if required:
            raise FeatureMissing(f"no feature CSV for {sample_id} under {index.root}/features")
        return None
    return load_feature_bank(path, seg)


def _prepare_split(config: RunConfig, ids: list[str], index: DatasetIndex, with_gt: bool):
    """Prepare images one id at a time so feature CSVs can match each segmentation."""
    grid = config.to_grid()

    def one(sample_id: str):
        sample = index.load(sample_id)
        seg = segment(sample, config.n_superpixels, config.compactness)
        feature_bank = _feature_bank_for(index, sample_id, seg, config.use_features)
        from .train import build_column_bank

        bank = build_column_bank(sample, seg, grid, feature_bank)
        gt_nodes = node_ground_truth(seg, sample.gt_mask) if with_gt else None
        from .estimator import PreparedImage

        return PreparedImage(sample=sample, seg=seg, bank=bank, gt_nodes=gt_nodes)

    if config.jobs == 1:
        return [one(sid) for sid in ids]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=config.jobs)(delayed(one)(sid) for sid in ids)


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    index = index_dataset(config.dataset_root)
    train_ids, _ = split_train_test(index.ids)
    if args.limit:
        train_ids = train_ids[: args.limit]
    logger.info("training on %d images", len(train_ids))
    prepared = _prepare_split(config, train_ids, index, with_gt=True)
    banks = [p.bank for p in prepared]
    gts = [p.gt_nodes for p in prepared]
    weights = fit_weights(
        banks,
        gts,
        {"dataset_id": str(config.dataset_root), "settings_hash": config.settings_hash()},
    )
    loss = training_loss(banks, gts, weights)

    out = _out_dir(config)
    weights_path = out / "weights.json"
    save_weights(weights_path, weights)
    abs_w = np.abs(weights.w)
    report = {
        "training_loss": loss,
        "n_training_samples": len(banks),
        "n_columns": int(weights.w.size),
        "weight_abs_mean": float(abs_w.mean()),
        "weight_abs_max": float(abs_w.max()),
        "top_columns": [
            {"matrix_id": int(m), "seed_id": int(s), "weight": float(weights.w[i])}
            for i, (m, s) in sorted(
                enumerate(weights.column_labels), key=lambda kv: -abs_w[kv[0]]
            )[:10]
        ],
    }
    report_path = out / "training_report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_manifest(config, "train", [weights_path.name, report_path.name])
    print(f"wrote {weights_path} (J={loss:.6g}, C={weights.w.size})")
    return 0


def _weights_use_features(weights: WeightVector, config: RunConfig) -> bool:
    n_spectral = config.to_grid().n_matrices
    return any(m >= n_spectral for m, _ in weights.column_labels)


def _check_weight_layout(weights: WeightVector, config: RunConfig, with_features: bool) -> None:
    expected = config.to_grid().column_labels(with_features)
    if list(weights.column_labels) != expected:
        raise LayoutMismatch(
            "weight file column layout does not match this configuration "
            f"({len(weights.column_labels)} columns vs expected {len(expected)})"
        )


def cmd_detect(args: argparse.Namespace) -> int:
    config = build_config(args)
    weights = load_weights(args.weights)
    with_features = _weights_use_features(weights, config)
    config.use_features = with_features
    _check_weight_layout(weights, config, with_features)
    grid = config.to_grid()
    out = _out_dir(config)
    outputs = []
    for image_path in args.images:
        sample = load_sample(image_path)
        seg = segment(sample, config.n_superpixels, config.compactness)
        feature_bank = None
        if with_features:
            if not args.features_dir:
                raise FeatureMissing("weights were trained with features; pass --features-dir")
            feature_bank = load_feature_bank(
                Path(args.features_dir) / f"{sample.id}.csv", seg
            )
        from .train import build_column_bank

        bank = build_column_bank(sample, seg, grid, feature_bank)
        saliency = infer(bank, weights, seg)
        dest = out / f"{sample.id}_saliency.png"
        save_gray_map(dest, saliency)
        outputs.append(dest.name)
        print(f"wrote {dest}")
    _write_manifest(config, "detect", outputs)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_config(args)
    index = index_dataset(config.dataset_root)
    train_ids, test_ids = split_train_test(index.ids)
    ids = {"train": train_ids, "test": test_ids, "all": index.ids}[args.split]
    if args.limit:
        ids = ids[: args.limit]
    weights = load_weights(args.weights)
    config.use_features = _weights_use_features(weights, config)
    _check_weight_layout(weights, config, config.use_features)

    prepared = _prepare_split(config, ids, index, with_gt=False)
    maps = [infer(p.bank, weights, p.seg) for p in prepared]
    gts = [p.sample.gt_mask for p in prepared]
    report = evaluation.evaluate_dataset(maps, gts)
    curve = evaluation.pr_curve(maps, gts)

    out = _out_dir(config)
    metrics_path = out / "metrics.json"
    metrics_path.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    curve_path = out / "pr_curve.csv"
    curve.write_csv(curve_path)
    _write_manifest(config, "evaluate", [metrics_path.name, curve_path.name])
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _test_items(config: RunConfig, index: DatasetIndex, ids: list[str], seedmap_dir: Path):
    for sample_id in ids:
        seed_path = seedmap_dir / f"{sample_id}.png"
        if not seed_path.exists():
            logger.warning("no seed map for %s under %s; skipping", sample_id, seedmap_dir)
            continue
        sample = index.load(sample_id)
        seg = segment(sample, config.n_superpixels, config.compactness)
        yield sample, seg, load_gray_map(seed_path, sample.shape)


def cmd_promote(args: argparse.Namespace) -> int:
    config = build_config(args)
    index = index_dataset(config.dataset_root)
    _, test_ids = split_train_test(index.ids)
    if args.limit:
        test_ids = test_ids[: args.limit]
    seedmap_dir = Path(args.seedmap_dir)
    items = _test_items(config, index, test_ids, seedmap_dir)
    before, after = evaluation.promote(items, args.matrix, config.to_grid())

    out = _out_dir(config)
    tag = args.matrix.replace("-", "_")
    before_path = out / f"promote_{tag}_before.csv"
    after_path = out / f"promote_{tag}_after.csv"
    before.write_csv(before_path)
    after.write_csv(after_path)
    _write_manifest(config, "promote", [before_path.name, after_path.name])
    print(f"wrote {before_path} and {after_path}")
    return 0


def cmd_cose(args: argparse.Namespace) -> int:
    config = build_config(args)
    index = index_dataset(config.dataset_root)
    _, test_ids = split_train_test(index.ids)
    if args.limit:
        test_ids = test_ids[: args.limit]
    grid = config.to_grid()

    def dataset():
        for sample_id in test_ids:
            sample = index.load(sample_id)
            seg = segment(sample, config.n_superpixels, config.compactness)
            yield seg, node_ground_truth(seg, sample.gt_mask)

    curve = evaluation.cose_curve(
        dataset(), lambda seg: evaluation.diffusion_matrix(seg, args.matrix, grid)
    )
    out = _out_dir(config)
    path = out / f"cose_{args.matrix.replace('-', '_')}.csv"
    curve.write_csv(path)
    _write_manifest(config, "cose", [path.name])
    print(f"wrote {path}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = build_config(args)
    index = index_dataset(config.dataset_root)
    train_ids, test_ids = split_train_test(index.ids)
    if args.limit:
        train_ids = train_ids[: args.limit]
        test_ids = test_ids[: args.limit]
    with_features = config.use_features
    if with_features and not all(index.features_for(sid) for sid in train_ids + test_ids):
        logger.warning("feature CSVs incomplete; stage S7 will be skipped")
        with_features = False
        config.use_features = False

    prepared_train = _prepare_split(config, train_ids, index, with_gt=True)
    prepared_test = _prepare_split(config, test_ids, index, with_gt=True)
    result = evaluation.ablate(
        prepared_train, prepared_test, config.to_grid(), with_features
    )

    out = _out_dir(config)
    outputs = []
    for stage, curve in result.curves.items():
        path = out / f"{stage}.csv"
        curve.write_csv(path)
        outputs.append(path.name)
    summary = {
        "mean_f_measure": result.mean_f,
        "training_loss": result.training_loss,
        "stages": evaluation.STAGE_DESCRIPTIONS,
    }
    summary_path = out / "ablation_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    outputs.append(summary_path.name)
    _write_manifest(config, "ablate", outputs)
    print(json.dumps(result.mean_f, indent=2, sort_keys=True))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superdiff",
        description="Salient object detection by integrated, spectrally refined graph diffusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="learn integration weights on the training split")
    _add_config_flags(p_train)
    p_train.add_argument("--limit", type=int, help="cap the number of training images")
    p_train.set_defaults(func=cmd_train)

    p_detect = sub.add_parser("detect", help="write saliency PNGs for images")
    _add_config_flags(p_detect)
    p_detect.add_argument("--weights", required=True)
    p_detect.add_argument("--features-dir", help="per-node feature CSVs, if weights use them")
    p_detect.add_argument("images", nargs="+")
    p_detect.set_defaults(func=cmd_detect)

    p_eval = sub.add_parser("evaluate", help="metrics JSON and PR CSV for a split")
    _add_config_flags(p_eval)
    p_eval.add_argument("--weights", required=True)
    p_eval.add_argument("--split", choices=("test", "train", "all"), default="test")
    p_eval.add_argument("--limit", type=int)
    p_eval.set_defaults(func=cmd_evaluate)

    p_promote = sub.add_parser("promote", help="PR before/after diffusing external seed maps")
    _add_config_flags(p_promote)
    p_promote.add_argument("--seedmap-dir", required=True)
    p_promote.add_argument("--matrix", choices=evaluation.MATRIX_CHOICES, default="refined")
    p_promote.add_argument("--limit", type=int)
    p_promote.set_defaults(func=cmd_promote)

    p_cose = sub.add_parser("cose", help="constrained optimal seed efficiency curve")
    _add_config_flags(p_cose)
    p_cose.add_argument("--matrix", choices=evaluation.MATRIX_CHOICES, default="refined")
    p_cose.add_argument("--limit", type=int)
    p_cose.set_defaults(func=cmd_cose)

    p_ablate = sub.add_parser("ablate", help="staged ablation curves S0..S7")
    _add_config_flags(p_ablate)
    p_ablate.add_argument("--limit", type=int)
    p_ablate.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SuperDiffError, DecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
