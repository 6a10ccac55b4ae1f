"""Command line interface (``zfnad``)."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _patch_args(p):
    p.add_argument("--p", type=int, default=100, help="seed pixels (default 100)")
    p.add_argument("--n", type=int, default=4, help="zoom levels (default 4)")
    p.add_argument("--alpha", type=int, default=4, help="pixels added per level (default 4)")
    p.add_argument("--q", type=int, default=250, help="kept candidates (default 250)")


def _patch_cfg(args):
    from zfnad.localize import PatchConfig

    return PatchConfig(p=args.p, n=args.n, alpha=args.alpha, q=args.q)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ----------------------------------------------------------

def cmd_synth_generate(args):
    from zfnad.synth import NARROW_MARGIN, WIDE_MARGIN, SynthSpec, generate, write_dataset

    spec = {"wide": WIDE_MARGIN, "narrow": NARROW_MARGIN}[args.preset].to_dict()
    if args.spec:
        spec.update(json.loads(Path(args.spec).read_text()))
    if args.seed is not None:
        spec["seed"] = args.seed
    paths = write_dataset(generate(SynthSpec.from_dict(spec)), args.out)
    _write_json({k: str(v) for k, v in paths.items()}, None)


def _pngs(directory):
    return sorted(Path(directory).glob("*.png")) + sorted(Path(directory).glob("*.zfnt"))


def cmd_reconstruct(args):
    from zfnad.recon import MedianReconstructor, write_manifest
    from zfnad.tensor import load_image, save_png, save_tensor

    train = [load_image(p) for p in _pngs(args.train_dir)]
    if not train:
        raise ValueError(f"no training images in {args.train_dir}")
    rec = MedianReconstructor(train)
    out = Path(args.out)
    (out / "recon").mkdir(parents=True, exist_ok=True)
    golden = out / "recon" / "golden.zfnt"
    save_tensor(golden, rec.golden)
    if rec.golden.channels == 1:
        save_png(out / "recon" / "golden.png", rec.golden)
    rows = []
    for label, directory in ((0, args.normal_dir), (1, args.abnormal_dir)):
        if not directory:
            continue
        for p in _pngs(directory):
            rec(load_image(p))  # validates dims
            rows.append({"original": str(Path(p).resolve()), "reconstruction": "recon/golden.zfnt", "label": label})
    write_manifest(out / "manifest.csv", rows)
    print(out / "manifest.csv")


def cmd_ingest(args):
    from zfnad.recon import ingest_pairs

    pairs = ingest_pairs(args.manifest)
    _write_json({
        "pairs": len(pairs),
        "normal": sum(p.label == 0 for p in pairs),
        "abnormal": sum(p.label == 1 for p in pairs),
        "shape": list(pairs[0].original.shape) if pairs else None,
        "with_sidecar": sum(p.sidecar.quantization_loss is not None for p in pairs),
    }, args.out)


def cmd_mask_build(args):
    from zfnad.maskweight import build_mask, save_mask
    from zfnad.recon import ingest_pairs

    pairs = ingest_pairs(args.manifest)
    if args.m:
        pairs = pairs[: args.m]
    mask = build_mask(pairs)
    header = save_mask(args.out, mask)
    print(f"mask from {mask.m_used} pairs -> {args.out} ({header.name})")


def _load_pair(args):
    from zfnad.recon import ReconPair
    from zfnad.tensor import load_image

    o, r = load_image(args.original), load_image(args.reconstruction)
    return ReconPair(o, r, None, Path(args.original).stem)


def cmd_localize(args):
    from zfnad.localize import rank_candidates, top_p_pixels
    from zfnad.maskweight import apply_mask, load_mask
    from zfnad.tensor import abs_diff

    pair = _load_pair(args)
    cfg = _patch_cfg(args)
    diff = abs_diff(pair.original, pair.reconstruction)
    if args.mask:
        diff = apply_mask(diff, load_mask(args.mask))
    cands = rank_candidates(pair, top_p_pixels(diff, cfg.p), cfg)
    _write_json([c.as_dict() for c in cands], args.out)
    if args.overlay:
        from zfnad.plotting import candidate_overlay

        candidate_overlay(pair.original.gray(), cands, args.overlay)


def cmd_metrics_extract(args):
    from zfnad.features import make_embedder
    from zfnad.maskweight import load_mask
    from zfnad.metrics import collect_table
    from zfnad.recon import ingest_pairs

    pairs = ingest_pairs(args.manifest)
    mask = load_mask(args.mask) if args.mask else None
    table = collect_table(pairs, mask, _patch_cfg(args), make_embedder(args.embedder, args.feature_dir),
                          threads=args.threads)
    table.to_csv(args.out)
    print(f"{len(table)} records x {len(table.schema)} features -> {args.out}")


def _scorer_cfg(args):
    from zfnad import config as zcfg
    from zfnad.scorer.model import ScorerConfig

    base = zcfg.merged(json.loads(Path(args.config).read_text()) if args.config else {},
                       preset=args.preset)
    d = {**base["scorer"], "seed": base["seed"], "threads": args.threads}
    if args.iterations is not None:
        d["iterations"] = args.iterations
    if args.folds is not None:
        d["folds"] = args.folds
    if args.classifiers:
        d["classifiers"] = args.classifiers.split(",")
    if args.seed is not None:
        d["seed"] = args.seed
    return ScorerConfig.from_dict(d)


def cmd_score_fit(args):
    from zfnad.metrics import MetricTable
    from zfnad.scorer.model import fit_score_model

    table = MetricTable.from_csv(args.metrics)
    fit = fit_score_model(table, _scorer_cfg(args), evaluate_all=False)
    fit.model.save(args.out)
    if args.probs:
        _write_scores(args.probs, fit.ids, fit.labels, fit.model.calibration["probabilities"],
                      fit.model.zfn_threshold)
    print(f"{fit.model.classifier_kind} model, ZFN threshold {fit.model.zfn_threshold:.6g} -> {args.out}")


def _write_scores(path, ids, labels, scores, threshold):
    from zfnad.scorer.model import decide

    dec = decide(scores, threshold)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "label", "score", "decision"])
        for i, l, s, d in zip(ids, labels, scores, dec):
            w.writerow([i, "" if l is None else int(l), format(float(s), ".17g"), int(d)])


def cmd_score_predict(args):
    from zfnad.metrics import MetricTable
    from zfnad.scorer.model import ScoreModel

    model = ScoreModel.load(args.model)
    table = MetricTable.from_csv(args.metrics)
    scores = model.score_table(table)
    out = args.out or "/dev/stdout"
    _write_scores(out, table.ids, table.labels, scores, model.zfn_threshold)


def cmd_evaluate(args):
    from zfnad.evaluation import evaluate, histogram, row
    from zfnad.scorer.model import ScoreModel, calibrate_zfn

    with open(args.scores, newline="") as fh:
        rows = list(csv.DictReader(fh))
    labels = np.array([int(r["label"]) for r in rows])
    scores = np.array([float(r["score"]) for r in rows])
    if args.threshold is not None:
        thr = args.threshold
    elif args.model:
        thr = ScoreModel.load(args.model).zfn_threshold
    else:
        thr = calibrate_zfn(scores, labels)
    ev = evaluate(scores, labels, thr)
    report = {"rows": [row(args.name, ev)], "threshold": thr, "histogram": histogram(scores, labels)}
    _write_json(report, args.out)
    if args.figures:
        from zfnad.plotting import score_histogram

        Path(args.figures).mkdir(parents=True, exist_ok=True)
        score_histogram(report["histogram"], thr, Path(args.figures) / "score_distribution")


def cmd_run(args):
    from zfnad import config as zcfg
    from zfnad.pipeline import run_pipeline

    if args.print_config:
        sys.stdout.write(zcfg.dumps(zcfg.resolve({}, preset=args.preset or "synth")))
        return
    from zfnad.pipeline import StageError

    try:
        cfg = zcfg.load_config(args.config) if args.config else zcfg.resolve({}, preset=args.preset)
    except (ValueError, OSError, KeyError, TypeError) as exc:
        raise StageError("config", exc) from exc
    arts = run_pipeline(cfg, args.out, threads=args.threads)
    report = json.loads(Path(arts["report"]).read_text())
    sel = report["selected"]
    print(f"{report['selected_classifier']}: accuracy STD {sel['accuracy_std']:.2f}% / "
          f"ZFN {sel['accuracy_zfn']:.2f}%, FPR ZFN {sel['fpr_zfn']:.2f}%, FNR ZFN {sel['fnr_zfn']:.2f}%")


def cmd_loss_check(args):
    from zfnad.recon import LossInputs, adaptive_lambda, gan_loss, vq_loss_from_mse
    from zfnad.tensor import load_image, mse

    if args.original and args.reconstruction:
        rec_mse = mse(load_image(args.original), load_image(args.reconstruction))
    else:
        rec_mse = args.mse
    li = LossInputs(np.array(_floats(args.encoded)), np.array(_floats(args.quantized)))
    vq = vq_loss_from_mse(rec_mse, li)
    gan = gan_loss(args.d_original, args.d_reconstruction)
    lam = adaptive_lambda(args.grad_rec, args.grad_gan)
    _write_json({"reconstruction_mse": rec_mse, "vq_loss": vq, "gan_loss": gan, "lambda": lam,
                 "total": vq + lam * gan}, None)


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zfnad", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthetic datasets").add_subparsers(dest="action", required=True)
    g = synth.add_parser("generate", help="write a synthetic dataset with manifests and ground truth")
    g.add_argument("--out", required=True)
    g.add_argument("--preset", choices=("wide", "narrow"), default="wide")
    g.add_argument("--spec", help="JSON file overriding SynthSpec fields")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_synth_generate)

    r = sub.add_parser("reconstruct", help="median baseline reconstruction + manifest")
    r.add_argument("--train-dir", required=True)
    r.add_argument("--normal-dir")
    r.add_argument("--abnormal-dir")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reconstruct)

    i = sub.add_parser("ingest", help="validate a reconstruction manifest")
    i.add_argument("--manifest", required=True)
    i.add_argument("--out")
    i.set_defaults(func=cmd_ingest)

    mask = sub.add_parser("mask", help="weighting mask").add_subparsers(dest="action", required=True)
    mb = mask.add_parser("build", help="build the mask from normal pairs")
    mb.add_argument("--manifest", required=True)
    mb.add_argument("--out", required=True)
    mb.add_argument("--m", type=int, default=None, help="use the first m rows (default all)")
    mb.set_defaults(func=cmd_mask_build)

    lo = sub.add_parser("localize", help="rank zoom-out-and-shift candidates for one pair")
    lo.add_argument("--original", required=True)
    lo.add_argument("--reconstruction", required=True)
    lo.add_argument("--mask")
    lo.add_argument("--out")
    lo.add_argument("--overlay")
    _patch_args(lo)
    lo.set_defaults(func=cmd_localize)

    met = sub.add_parser("metrics", help="metric extraction").add_subparsers(dest="action", required=True)
    me = met.add_parser("extract", help="metrics CSV for every pair of a manifest")
    me.add_argument("--manifest", required=True)
    me.add_argument("--mask")
    me.add_argument("--out", required=True)
    me.add_argument("--embedder", choices=("baseline", "external"), default="baseline")
    me.add_argument("--feature-dir")
    me.add_argument("--threads", type=int, default=1)
    _patch_args(me)
    me.set_defaults(func=cmd_metrics_extract)

    sc = sub.add_parser("score", help="composite anomaly score").add_subparsers(dest="action", required=True)
    sf = sc.add_parser("fit", help="fit the score model with ZFN calibration")
    sf.add_argument("--metrics", required=True)
    sf.add_argument("--out", required=True)
    sf.add_argument("--config", help="pipeline config whose scorer section is used")
    sf.add_argument("--preset", choices=("synth", "full"), default="full")
    sf.add_argument("--iterations", type=int)
    sf.add_argument("--folds", type=int)
    sf.add_argument("--classifiers", help="comma separated subset of DT,RF,ET,GBC,LR,KNN,NB")
    sf.add_argument("--seed", type=int)
    sf.add_argument("--threads", type=int, default=1)
    sf.add_argument("--probs", help="write calibration probabilities as a scores CSV")
    sf.set_defaults(func=cmd_score_fit)
    sp = sc.add_parser("predict", help="score a metrics CSV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_score_predict)

    ev = sub.add_parser("evaluate", help="STD and ZFN rates from a scores CSV")
    ev.add_argument("--scores", required=True, help="CSV with image_id,label,score")
    ev.add_argument("--threshold", type=float)
    ev.add_argument("--model", help="take the ZFN threshold from a model")
    ev.add_argument("--name", default="model")
    ev.add_argument("--out")
    ev.add_argument("--figures")
    ev.set_defaults(func=cmd_evaluate)

    rn = sub.add_parser("run", help="full pipeline from a JSON config")
    rn.add_argument("--config")
    rn.add_argument("--preset", choices=("synth", "full"))
    rn.add_argument("--out", default="zfnad-run")
    rn.add_argument("--threads", type=int)
    rn.add_argument("--print-config", action="store_true", help="print the resolved default config and exit")
    rn.set_defaults(func=cmd_run)

    ls = sub.add_parser("loss", help="VQGAN loss arithmetic").add_subparsers(dest="action", required=True)
    lc = ls.add_parser("check", help="evaluate the loss terms at given values")
    lc.add_argument("--encoded", default="0")
    lc.add_argument("--quantized", default="0")
    lc.add_argument("--mse", type=float, default=0.0)
    lc.add_argument("--original")
    lc.add_argument("--reconstruction")
    lc.add_argument("--d-original", type=float, default=0.5)
    lc.add_argument("--d-reconstruction", type=float, default=0.5)
    lc.add_argument("--grad-rec", type=float, default=0.0)
    lc.add_argument("--grad-gan", type=float, default=0.0)
    lc.set_defaults(func=cmd_loss_check)
    return ap


def main(argv=None) -> int:
    from zfnad.pipeline import StageError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"zfnad: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"zfnad {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
