"""File-based pipeline steps behind the command line.

Everything lives under one work directory:

    data/{train,val,test}.txt            generated images, masks, manifests
    corrupt/<scenario>/<split>/          corrupted split, labels.txt, records.jsonl
    cluster/*.igwt                       stage-1 models and merge map
    <split dir>/pred-<source>/           predicted masks per manifest
    syntax/<source>-<plan>/model.igwt    syntax model and loss log
    calib/<source>-<scenario>/<method>.json  thresholds
    results/<source>-<scenario>/         detection and puzzle results
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .cluster import (
    Extractor,
    LinearClassifier,
    PicieConfig,
    finetune_patch_detector,
    finetune_prior,
    load_models,
    majority_merge_map,
    merge_clusters,
    read_merge_map,
    save_models,
    segment,
    train_picie,
    write_loss_log,
    write_merge_map,
)
from .config import RunConfig
from .corrupt import corrupt, derive_seed, make_puzzles, write_records
from .data import (
    Manifest,
    SyntheticSpec,
    crop,
    load_mask,
    paste,
    read_manifest,
    resize_image,
    resize_mask,
    save_image,
    save_mask,
    write_manifest,
    write_synthetic,
)
from .data.synthetic import anchors
from .syntax import SyntaxConfig, SyntaxModel, build_traversal, train_syntax, write_syntax_log
from .validate import (
    HIGHER_IS_CORRUPT,
    DetectionReport,
    ThresholdModel,
    averaged_semantics,
    calibrate_threshold,
    classify,
    detection_metrics,
    miou_validation,
    residual_avg,
    residual_baseline,
    solve_puzzle,
    write_histogram_csv,
    write_report_csv,
    write_report_json,
)

log = logging.getLogger(__name__)

SEG_BATCH = 32  # fixed so results do not depend on --jobs


class DependencyError(RuntimeError):
    """A required upstream artifact is missing."""


def _need(path: Path, command: str) -> Path:
    if not path.exists():
        raise DependencyError(f"missing {path}; run `grammarscope {command}` first")
    return path


def _prepare_out(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def plan_for(cfg: RunConfig):
    pts = anchors(cfg.family, cfg.dims) if cfg.traversal == "five-crop" else None
    return build_traversal(cfg.traversal, cfg.dims, cfg.ps, pts, cfg.circular)


def _corruption_rects(cfg: RunConfig, plan):
    return list(plan.rects) if cfg.traversal == "five-crop" else None


def _load_all(man: Manifest, jobs: int = 1):
    with ThreadPoolExecutor(max(1, jobs)) as pool:
        pairs = list(pool.map(man.load, range(len(man))))
    return np.stack([p[0] for p in pairs]), [p[1] for p in pairs]


# -- gen-data ------------------------------------------------------------------

def gen_data(cfg: RunConfig, work: Path, force: bool = False) -> dict[str, Manifest]:
    out = work / "data"
    _prepare_out(out, force)
    spec = SyntheticSpec(cfg.family, cfg.height, cfg.width, cfg.jitter, cfg.color_jitter, cfg.noise,
                         n=cfg.n or cfg.n_train + cfg.n_val + cfg.n_test, seed=cfg.seed)
    return write_synthetic(spec, out, {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test})


# -- corrupt -------------------------------------------------------------------

SPLIT_IDS = {"train": 0, "val": 1, "test": 2}


def corrupt_split(cfg: RunConfig, manifest_path: Path, out: Path, force: bool = False) -> list[int]:
    """Corrupt ceil(half) of a split (seeded choice); returns per-image labels."""
    man = read_manifest(manifest_path)
    _prepare_out(out, force)
    (out / "images").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    plan = plan_for(cfg)
    rects = _corruption_rects(cfg, plan)
    num = cfg.patch_count(plan.G)
    n = len(man)
    split_seed = derive_seed(cfg.seed, 1000 + SPLIT_IDS.get(man.split, 9))
    chosen = set(np.random.default_rng(split_seed).choice(n, math.ceil(n / 2), replace=False).tolist())
    labels, records = [], []
    result = Manifest(split=man.split, num_classes=man.num_classes, dims=man.dims, seed=cfg.seed, root=out)
    for i in range(n):
        image, mask = man.load(i)
        name = Path(man.entries[i][0]).stem
        if i in chosen:
            (image, mask), record = corrupt([image, mask], cfg.corruption, num, cfg.ps, derive_seed(split_seed, i),
                                            rects, cfg.kernel_size, cfg.sigma)
            record.source = man.entries[i][0]
            records.append(record)
        labels.append(int(i in chosen))
        save_image(out / "images" / f"{name}.ppm", image)
        save_mask(out / "masks" / f"{name}.pgm", mask, man.num_classes)
        result.entries.append((f"images/{name}.ppm", f"masks/{name}.pgm"))
    write_manifest(out / f"{man.split}.txt", result)
    (out / "labels.txt").write_text("".join(f"{lab}\n" for lab in labels))
    write_records(out / "records.jsonl", records)
    return labels


def corrupt_dir(cfg: RunConfig, work: Path) -> Path:
    return work / "corrupt" / cfg.scenario


def cmd_corrupt(cfg: RunConfig, work: Path, splits=("val", "test"), force: bool = False) -> None:
    for split in splits:
        src = _need(work / "data" / f"{split}.txt", "gen-data")
        labels = corrupt_split(cfg, src, corrupt_dir(cfg, work) / split, force)
        log.info("corrupted %d of %d %s images (%s)", sum(labels), len(labels), split, cfg.scenario)


# -- stage 1 -------------------------------------------------------------------

def train_cluster(cfg: RunConfig, work: Path, jobs: int = 1) -> None:
    man = read_manifest(_need(work / "data" / "train.txt", "gen-data"))
    images, masks = _load_all(man, jobs)
    masks = np.stack(masks)
    out = work / "cluster"
    out.mkdir(parents=True, exist_ok=True)
    ext = Extractor(cfg.feature_dim, cfg.feature_hidden, seed=cfg.seed)
    pcfg = PicieConfig(K=cfg.K, km_init=cfg.km_init, km_num=cfg.km_num, km_iter=cfg.km_iter,
                       epochs=cfg.cluster_epochs, lr=cfg.cluster_lr, batch_size=cfg.cluster_batch, seed=cfg.seed)
    result = train_picie(ext, images, pcfg)
    write_loss_log(out / "picie_loss.csv", result.log)
    clusters = segment(ext, images, centroids=result.centroids, batch_size=SEG_BATCH)
    mapping = majority_merge_map(clusters, masks, cfg.K, cfg.num_classes)
    write_merge_map(out / "merge.txt", mapping)
    save_models(out / "unsupervised.igwt", ext, centroids=result.centroids)
    # supervised refinement on labelled pixels, starting from the clustered extractor
    tuned, clf = ext.copy(), LinearClassifier(cfg.feature_dim, cfg.num_classes, seed=cfg.seed)
    hist = finetune_prior(tuned, clf, images, masks, cfg.prior_epochs, cfg.prior_lr, cfg.prior_batch, cfg.seed)
    (out / "prior_loss.csv").write_text("epoch,loss\n" + "".join(f"{i + 1},{v:.8f}\n" for i, v in enumerate(hist)))
    save_models(out / "classifier.igwt", tuned, clf)
    if cfg.mask_source == "patch":
        plan = plan_for(cfg)
        crops, crop_masks = [], []
        for image, mask in zip(images, masks):
            crops += [crop(image, r) for r in plan.rects]
            crop_masks += [crop(mask, r) for r in plan.rects]
        det, det_clf = tuned.copy(), clf.copy()
        finetune_patch_detector(det, det_clf, crops, crop_masks, cfg.num_classes, cfg.dims,
                                max(1, cfg.prior_epochs // 2), cfg.prior_lr, cfg.prior_batch, cfg.seed)
        save_models(out / "patch.igwt", det, det_clf)


class Segmenter:
    """Masks for images under the configured stage-1 source."""

    def __init__(self, cfg: RunConfig, work: Path):
        self.cfg, self.plan = cfg, plan_for(cfg)
        d = work / "cluster"
        if cfg.mask_source == "cluster":
            self.ext, _, self.centroids = load_models(_need(d / "unsupervised.igwt", "train-cluster"))
            self.mapping = read_merge_map(_need(d / "merge.txt", "train-cluster"))
        else:
            self.ext, self.clf, _ = load_models(_need(d / "classifier.igwt", "train-cluster"))
        if cfg.mask_source == "patch":
            self.det, self.det_clf, _ = load_models(_need(d / "patch.igwt", "train-cluster"))

    def __call__(self, images: np.ndarray) -> np.ndarray:
        if self.cfg.mask_source == "cluster":
            return merge_clusters(segment(self.ext, images, centroids=self.centroids, batch_size=SEG_BATCH), self.mapping)
        masks = segment(self.ext, images, classifier=self.clf, batch_size=SEG_BATCH)
        if self.cfg.mask_source == "patch":
            for t, r in enumerate(self.plan.rects):
                zoom = np.stack([resize_image(crop(im, r), self.cfg.dims) for im in images])
                sub = segment(self.det, zoom, classifier=self.det_clf, batch_size=SEG_BATCH)
                for m, s in zip(masks, sub):
                    paste(m, r, resize_mask(s, r[2:]))
        return masks


def pred_dir(manifest_path: Path, source: str) -> Path:
    return manifest_path.parent / f"pred-{source}"


def segment_manifest(seg: Segmenter, manifest_path: Path, jobs: int = 1) -> None:
    man = read_manifest(manifest_path)
    out = pred_dir(manifest_path, seg.cfg.mask_source)
    out.mkdir(parents=True, exist_ok=True)
    for start in range(0, len(man), SEG_BATCH):
        idx = range(start, min(start + SEG_BATCH, len(man)))
        with ThreadPoolExecutor(max(1, jobs)) as pool:
            images = np.stack([p[0] for p in pool.map(man.load, idx)])
        for i, m in zip(idx, seg(images)):
            save_mask(out / f"{Path(man.entries[i][0]).stem}.pgm", m, seg.cfg.num_classes)


def segment_all(cfg: RunConfig, work: Path, jobs: int = 1) -> list[Path]:
    """Predict masks for every generated and corrupted split present."""
    if cfg.mask_source == "gt":
        log.info("mask_source=gt: nothing to segment")
        return []
    _need(work / "data" / "train.txt", "gen-data")
    seg = Segmenter(cfg, work)
    targets = [work / "data" / f"{s}.txt" for s in ("train", "val", "test")]
    for split in ("val", "test"):
        targets += sorted((work / "corrupt").glob(f"*/{split}/{split}.txt"))
    for path in targets:
        if path.exists():
            segment_manifest(seg, path, jobs)
    return targets


def split_masks(cfg: RunConfig, manifest_path: Path) -> list[np.ndarray]:
    """Masks for a manifest under the configured source."""
    man = read_manifest(manifest_path)
    if cfg.mask_source == "gt":
        return [load_mask(man.mask_path(i))[0] for i in range(len(man))]
    d = _need(pred_dir(manifest_path, cfg.mask_source), "segment")
    out = []
    for entry in man.entries:
        out.append(load_mask(_need(d / f"{Path(entry[0]).stem}.pgm", "segment"))[0])
    return out


# -- stage 2 -------------------------------------------------------------------

def syntax_dir(cfg: RunConfig, work: Path) -> Path:
    return work / "syntax" / f"{cfg.mask_source}-{cfg.traversal}-ps{cfg.ps}"


def syntax_config(cfg: RunConfig) -> SyntaxConfig:
    return SyntaxConfig(epochs=cfg.epochs, lr=cfg.lr, schedule=cfg.schedule, batch_size=cfg.batch_size,
                        seed=cfg.seed, mask_res=cfg.mask_res, embed_dim=cfg.embed_dim,
                        hidden=cfg.hidden or None, circular=cfg.circular)


def cmd_train_syntax(cfg: RunConfig, work: Path) -> list[float]:
    masks = split_masks(cfg, _need(work / "data" / "train.txt", "gen-data"))
    model, hist = train_syntax(masks, plan_for(cfg), cfg.num_classes, syntax_config(cfg))
    out = syntax_dir(cfg, work)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model.igwt")
    write_syntax_log(out / "loss.csv", hist)
    return hist


class Scorer:
    """Per-image grammar scores under one method."""

    def __init__(self, cfg: RunConfig, work: Path):
        self.cfg, self.plan = cfg, plan_for(cfg)
        train = split_masks(cfg, _need(work / "data" / "train.txt", "gen-data"))
        self.avg = averaged_semantics(train, self.plan, cfg.num_classes)
        self.model = None
        if cfg.method != "miou":
            self.model = SyntaxModel.load(_need(syntax_dir(cfg, work) / "model.igwt", "train-syntax"))

    def traces(self, masks) -> list[dict]:
        from .syntax import prepare_sequences

        if self.cfg.method == "miou":
            return [{"score": miou_validation(self.plan.crops(m), self.avg)} for m in masks]
        flat, sem = prepare_sequences(masks, self.plan, self.cfg.num_classes, self.model.mask_res)
        if self.cfg.method == "baseline":
            traces = residual_baseline(self.model, flat, sem)
        else:
            traces = residual_avg(self.model, flat, sem, self.avg)
        return [{"score": t.e_pred, "forward": t.forward.tolist(), "backward": t.backward.tolist()} for t in traces]

    def scores(self, masks) -> np.ndarray:
        return np.array([t["score"] for t in self.traces(masks)])


def _labels(split_dir: Path) -> np.ndarray:
    return np.array([int(x) for x in _need(split_dir / "labels.txt", "corrupt").read_text().split()], dtype=bool)


def calib_path(cfg: RunConfig, work: Path) -> Path:
    return work / "calib" / f"{cfg.mask_source}-{cfg.scenario}" / f"{cfg.method}.json"


def cmd_calibrate(cfg: RunConfig, work: Path) -> ThresholdModel:
    d = corrupt_dir(cfg, work) / "val"
    labels = _labels(d)
    scores = Scorer(cfg, work).scores(split_masks(cfg, _need(d / "val.txt", "corrupt")))
    tm = calibrate_threshold(scores[~labels], scores[labels], HIGHER_IS_CORRUPT[cfg.method])
    out = calib_path(cfg, work)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(tm.to_json() + "\n")
    write_histogram_csv(out.with_suffix(".val_hist.csv"), scores, labels)
    return tm


def result_dir(cfg: RunConfig, work: Path) -> Path:
    return work / "results" / f"{cfg.mask_source}-{cfg.scenario}"


def cmd_evaluate(cfg: RunConfig, work: Path) -> DetectionReport:
    tm = ThresholdModel.from_json(_need(calib_path(cfg, work), "calibrate").read_text())
    d = corrupt_dir(cfg, work) / "test"
    labels = _labels(d)
    traces = Scorer(cfg, work).traces(split_masks(cfg, _need(d / "test.txt", "corrupt")))
    scores = np.array([t["score"] for t in traces])
    verdicts = np.array([classify(s, tm) for s in scores])
    plan = plan_for(cfg)
    rep = detection_metrics(verdicts, labels, method=cfg.method, masks=cfg.mask_source, corruption=cfg.corruption,
                            num_patch=cfg.patch_count(plan.G), ps=cfg.ps)
    out = result_dir(cfg, work)
    out.mkdir(parents=True, exist_ok=True)
    details = {"tau": tm.tau, "mask_source": cfg.mask_source,
               "images": [{**t, "label": int(y), "verdict": int(v)} for t, y, v in zip(traces, labels, verdicts)]}
    write_report_json(out / f"{cfg.method}.json", [rep], details)
    write_report_csv(out / f"{cfg.method}.csv", [rep])
    write_histogram_csv(out / f"{cfg.method}.hist.csv", scores, labels)
    return rep


def cmd_puzzle(cfg: RunConfig, work: Path) -> float:
    """Original plus num_fakes permuted copies per test image; success when the original is picked."""
    man = read_manifest(_need(work / "data" / "test.txt", "gen-data"))
    plan = plan_for(cfg)
    rects = _corruption_rects(cfg, plan)
    scorer = Scorer(cfg, work)
    seg = None if cfg.mask_source == "gt" else Segmenter(cfg, work)
    base = derive_seed(cfg.seed, 2000)
    picks = []
    for i in range(min(cfg.num_puzzles, len(man))):
        image, mask = man.load(i)
        copies, _ = make_puzzles([image, mask], cfg.num_fakes, cfg.ps, derive_seed(base, i), rects)
        if seg is None:
            masks = [c[1] for c in copies]
        else:
            masks = list(seg(np.stack([c[0] for c in copies])))
        picks.append(solve_puzzle(scorer.scores(masks), cfg.method))
    rate = float(np.mean(np.array(picks) == 0))
    out = work / "results" / f"{cfg.mask_source}-puzzle-{cfg.num_fakes}-ps{cfg.ps}"
    out.mkdir(parents=True, exist_ok=True)
    row = {"method": cfg.method, "masks": cfg.mask_source, "corruption": "puzzle", "num_patch": cfg.num_fakes, "ps": cfg.ps,
           "accuracy": "", "recall": "", "puzzle_rate": f"{rate:.6f}", "tp": "", "tn": "", "fp": "", "fn": ""}
    payload = {"reports": [row], "details": {"picks": picks, "mask_source": cfg.mask_source}}
    (out / f"{cfg.method}.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return rate


def cmd_report(paths: list[Path], out: Path) -> int:
    """Merge result files into one CSV; returns the row count."""
    import csv

    from .validate.metrics import REPORT_FIELDS

    rows = []
    for p in paths:
        rows += json.loads(_need(Path(p), "evaluate").read_text())["reports"]
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return len(rows)
