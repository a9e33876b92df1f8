"""Command-line front end: synth | flows | segment | eval | pipeline.

Exit codes: 0 success, 2 validation/IO error, 3 internal error. Errors
print ``[err_id] message`` on stderr so batch drivers can parse them.
"""

import functools
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import io_formats as iof
from .dynamics import SegmentationSettings
from .errors import CrownflowError
from .flows import flows_from_labels
from .gate import filter_instances_by_canopy
from .metrics import ScoredPrediction, scores_from_prob, summary
from .pipeline import segment_scaled, segment_tiled
from .synth import SceneSpec, generate_scene


def _fail(err):
    click.echo(f"[{err.err_id}] {err}", err=True)
    sys.exit(err.exit_code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CrownflowError as err:
            _fail(err)
    return wrapper


def _emit_report(report, out):
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


settings_options = [
    click.option("--niter", type=int, default=None, help="Euler steps (default 200)."),
    click.option("--flow-threshold", type=float, default=None,
                 help="Flow-consistency filter threshold (default 1.0)."),
    click.option("--cellprob-threshold", type=float, default=None,
                 help="Probability gate for advection (default 0.0, strict >)."),
    click.option("--min-area", type=int, default=None,
                 help="Minimum instance area in pixels (default 15)."),
    click.option("--diameter", type=float, default=30.0,
                 help="Expected crown diameter in pixels (30 = native scale)."),
]


def with_settings(fn):
    for opt in reversed(settings_options):
        fn = opt(fn)
    return fn


def _build_settings(niter, flow_threshold, cellprob_threshold, min_area):
    return SegmentationSettings().with_overrides(
        niter=niter, flow_threshold=flow_threshold,
        cellprob_threshold=cellprob_threshold, min_area=min_area)


@click.group()
def main():
    """Training-free crown instance segmentation via flow convergence."""


@main.command()
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--height", type=int, default=512)
@click.option("--width", type=int, default=512)
@click.option("--n-crowns", type=int, default=50)
@click.option("--r-min", type=float, default=8.0)
@click.option("--r-max", type=float, default=24.0)
@click.option("--lobe-amplitude", type=float, default=0.3)
@click.option("--max-occlusion", type=float, default=0.5)
@click.option("--clutter/--no-clutter", default=False)
@click.option("--seed", type=int, default=0)
@handle_errors
def synth(out, height, width, n_crowns, r_min, r_max, lobe_amplitude,
          max_occlusion, clutter, seed):
    """Generate a synthetic crown scene (image, labels, semantic, manifest)."""
    spec = SceneSpec(height=height, width=width, n_crowns=n_crowns,
                     radius_range=(r_min, r_max), lobe_amplitude=lobe_amplitude,
                     max_occlusion=max_occlusion, clutter=clutter, seed=seed)
    scene = generate_scene(spec)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    iof.write_image_png(outdir / "image.png", scene.image)
    iof.write_labels_png(outdir / "labels.png", scene.labels)
    iof.write_mask_png(outdir / "semantic.png", scene.semantic)
    spec_doc = asdict(spec)
    spec_doc["radius_range"] = list(spec.radius_range)
    iof.write_manifest(outdir / "manifest.json",
                       {"image": "image.png", "labels": "labels.png",
                        "semantic": "semantic.png"},
                       scene_spec=spec_doc)


@main.command()
@click.argument("labels_path", type=click.Path(exists=True))
@click.option("--out-flows", type=click.Path(), required=True)
@click.option("--out-prob", type=click.Path(), required=True)
@handle_errors
def flows(labels_path, out_flows, out_prob):
    """Compute oracle flows and a foreground probability map from labels."""
    labels = iof.read_labels_png(labels_path)
    flow = flows_from_labels(labels)
    prob = (labels > 0).astype(np.float32)
    iof.write_flows_npy(out_flows, flow)
    iof.write_npy(out_prob, prob)


def _load_inputs(flows_path, prob_path, semantic_path, strict):
    flow = iof.read_flows_npy(flows_path, strict=strict)
    prob = iof.read_prob_npy(prob_path)
    semantic = iof.read_mask_png(semantic_path) if semantic_path else None
    return flow, prob, semantic


def _run_report(labels, settings, diameter, started):
    return {
        "status": "ok",
        "n_instances": int(labels.max()),
        "settings": asdict(settings),
        "diameter": diameter,
        "seconds": round(time.perf_counter() - started, 3),
    }


@main.command()
@click.option("--flows", "flows_path", type=click.Path(exists=True), required=True)
@click.option("--prob", "prob_path", type=click.Path(exists=True), required=True)
@click.option("--semantic", "semantic_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True, help="Output label PNG.")
@click.option("--report", type=click.Path(), default=None)
@click.option("--rho", type=float, default=0.5,
              help="Canopy-overlap fraction for the optional post filter.")
@click.option("--post-filter/--no-post-filter", default=False,
              help="Also drop instances mostly outside the semantic mask.")
@click.option("--strict", is_flag=True, default=False)
@with_settings
def segment(flows_path, prob_path, semantic_path, out, report, rho,
            post_filter, strict, niter, flow_threshold, cellprob_threshold,
            min_area, diameter):
    """Segment a flow/probability raster into instance labels."""
    started = time.perf_counter()
    settings = _build_settings(niter, flow_threshold, cellprob_threshold, min_area)
    try:
        flow, prob, semantic = _load_inputs(flows_path, prob_path, semantic_path, strict)
        labels = segment_scaled(flow, prob, settings, diameter=diameter,
                                semantic=semantic)
        if post_filter and semantic is not None:
            labels = filter_instances_by_canopy(labels, semantic, rho)
        iof.write_labels_png(out, labels)
    except CrownflowError as err:
        if report:
            _emit_report({"status": "error", "error": err.err_id,
                          "message": str(err)}, report)
        _fail(err)
    _emit_report(_run_report(labels, settings, diameter, started), report)


@main.command()
@click.argument("gt_path", type=click.Path(exists=True))
@click.argument("pred_path", type=click.Path(exists=True))
@click.option("--prob", "prob_path", type=click.Path(exists=True), default=None,
              help="Probability NPY used to score predictions.")
@click.option("--report", type=click.Path(), default=None)
@handle_errors
def eval(gt_path, pred_path, prob_path, report):
    """Score predicted labels against ground truth (summary at IoU 0.5)."""
    gt = iof.read_labels_png(gt_path)
    pred = iof.read_labels_png(pred_path)
    scores = {}
    if prob_path:
        scores = scores_from_prob(pred, iof.read_prob_npy(prob_path))
    _emit_report(summary(gt, ScoredPrediction(pred, scores)), report)


@main.command()
@click.option("--flows", "flows_path", type=click.Path(exists=True), required=True)
@click.option("--prob", "prob_path", type=click.Path(exists=True), required=True)
@click.option("--semantic", "semantic_path", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report", type=click.Path(), default=None)
@click.option("--tile", type=int, default=1024)
@click.option("--overlap", type=int, default=128)
@click.option("--strict", is_flag=True, default=False)
@with_settings
def pipeline(flows_path, prob_path, semantic_path, out, report, tile, overlap,
             strict, niter, flow_threshold, cellprob_threshold, min_area,
             diameter):
    """Tiled end-to-end segmentation for large rasters."""
    started = time.perf_counter()
    settings = _build_settings(niter, flow_threshold, cellprob_threshold, min_area)
    try:
        flow, prob, semantic = _load_inputs(flows_path, prob_path, semantic_path, strict)
        labels = segment_tiled(flow, prob, settings, diameter=diameter,
                               semantic=semantic, tile=tile, overlap=overlap)
        iof.write_labels_png(out, labels)
    except CrownflowError as err:
        if report:
            _emit_report({"status": "error", "error": err.err_id,
                          "message": str(err)}, report)
        _fail(err)
    _emit_report(_run_report(labels, settings, diameter, started), report)


if __name__ == "__main__":
    main()
