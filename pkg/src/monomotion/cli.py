"""Command line entry points.

Exit codes: 0 success, 1 usage error, 2 runtime failure. `--json` switches
stdout to a single machine-readable JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_model(path: str):
    from .network import load_checkpoint

    return load_checkpoint(Path(path).read_bytes())


def _load_clip(path: str):
    from .bvh import parse_bvh
    from .motion_io import motion_from_json, to_feature_tensor

    text = Path(path).read_text()
    if path.endswith(".json"):
        return to_feature_tensor(motion_from_json(text))
    return to_feature_tensor(parse_bvh(text))


def _write_motion(tensor, out_path: str):
    from .bvh import write_bvh
    from .motion_io import from_feature_tensor, motion_to_json

    motion = from_feature_tensor(tensor)
    out = Path(out_path)
    if out.suffix == ".json":
        out.write_text(motion_to_json(motion))
    else:
        out.write_text(write_bvh(motion))
    return str(out)


def _emit(ns, payload: dict):
    if getattr(ns, "json", False):
        print(json.dumps(payload))
    else:
        for key, value in payload.items():
            print(f"{key}: {value}")


def build_parser() -> _Parser:
    p = _Parser(prog="monomotion", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--json", action="store_true", help="JSON output on stdout")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a model on one clip")
    add_common(t)
    t.add_argument("--input", required=True, help="BVH or MotionJSON clip")
    t.add_argument("--preset", default="abl9-smoke",
                   choices=["abl9", "baseline", "abl9-smoke"])
    t.add_argument("--config", help="JSON document of TrainConfig overrides")
    t.add_argument("--iteration-unit", type=float, default=None,
                   help="multiplier applied to the per-level iteration units")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--trace", help="write the per-iteration loss CSV here")
    t.add_argument("--report", help="write the training summary JSON here")

    g = sub.add_parser("generate", help="sample a new motion")
    add_common(g)
    g.add_argument("--model", required=True)
    g.add_argument("--frames", type=int, default=None)
    g.add_argument("--out", required=True, help=".bvh or .json output")

    c = sub.add_parser("compose", help="body-part or ROI composition")
    add_common(c)
    c.add_argument("--model", required=True)
    c.add_argument("--reference", help="reference clip (default: training clip)")
    c.add_argument("--mask", help="mask JSON file for body-part composition")
    c.add_argument("--rois", help="ROI placement JSON file")
    c.add_argument("--frames", type=int, help="timeline length for ROI mode")
    c.add_argument("--level", type=int, default=1,
                   help="pyramid level (0-based) receiving the overwrite")
    c.add_argument("--out", required=True)

    i = sub.add_parser("inpaint", help="regenerate masked frame ranges")
    add_common(i)
    i.add_argument("--model", required=True)
    i.add_argument("--reference", help="reference clip (default: training clip)")
    i.add_argument("--mask", required=True,
                   help="mask JSON with frames ranges at splice resolution")
    i.add_argument("--out", required=True)

    r = sub.add_parser("restyle", help="re-style a content clip")
    add_common(r)
    r.add_argument("--style-model", required=True)
    r.add_argument("--content", required=True)
    r.add_argument("--out", required=True)

    w = sub.add_parser("crowd", help="generate n motion variations")
    add_common(w)
    w.add_argument("--model", required=True)
    w.add_argument("--n", type=int, default=8)
    w.add_argument("--out-dir", required=True)

    e = sub.add_parser("expand", help="extend a clip with generated content")
    add_common(e)
    e.add_argument("--model", required=True)
    e.add_argument("--reference", help="reference clip (default: training clip)")
    e.add_argument("--extra-frames", type=int, required=True)
    e.add_argument("--out", required=True)

    v = sub.add_parser("evaluate", help="quality/diversity metrics report")
    add_common(v)
    v.add_argument("--model", required=True)
    v.add_argument("--input", help="input clip (default: training clip)")
    v.add_argument("--samples", type=int, default=32)
    v.add_argument("--csv", action="store_true", help="emit the CSV row")

    a = sub.add_parser("analyze-cka", help="stage/layer similarity analysis")
    add_common(a)
    a.add_argument("--model", required=True)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--probes", type=int, default=64)

    s = sub.add_parser("serve", help="run the HTTP service")
    add_common(s)
    s.add_argument("--checkpoint-root",
                   help="defaults to $MONOMOTION_CHECKPOINT_ROOT")
    s.add_argument("--config", help="JSON file with port/latency_budget_s")
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--latency-budget", type=float, default=None)

    return p


def _reference_tensor(ns, model):
    if getattr(ns, "reference", None):
        return _load_clip(ns.reference)
    if model.input_motion is None:
        raise UsageError("--reference required: checkpoint has no training clip")
    return model.input_motion


def _cmd_train(ns):
    from .network import save_checkpoint
    from .training import TrainConfig, preset, train_all

    cfg = preset(ns.preset)
    if ns.config:
        overrides = json.loads(Path(ns.config).read_text())
        merged = cfg.to_json_dict()
        merged.update(overrides)
        cfg = TrainConfig.from_json_dict(merged)
    cfg.seed = ns.seed
    if ns.iteration_unit is not None:
        cfg.iteration_unit = ns.iteration_unit
    clip = _load_clip(ns.input)
    model, report = train_all(clip, cfg)
    Path(ns.out).write_bytes(save_checkpoint(model))
    payload = {"checkpoint": ns.out, "final_lrec": report.final_lrec,
               "total_iterations": report.total_iterations,
               "total_wall_s": report.total_wall_s}
    if ns.trace:
        Path(ns.trace).write_text(report.trace.to_csv())
        payload["trace"] = ns.trace
    if ns.report:
        Path(ns.report).write_text(json.dumps(report.to_json_dict(), indent=1))
        payload["report"] = ns.report
    if report.metrics:
        payload["metrics"] = report.metrics
    _emit(ns, payload)


def _cmd_generate(ns):
    model = _load_model(ns.model)
    out = model.generate_full(ns.seed, length_override=ns.frames)
    path = _write_motion(out, ns.out)
    _emit(ns, {"out": path, "frames": out.frames, "seed": ns.seed})


def _cmd_compose(ns):
    from . import apps

    model = _load_model(ns.model)
    if (ns.mask is None) == (ns.rois is None):
        raise UsageError("pass exactly one of --mask or --rois")
    if ns.mask:
        reference = _reference_tensor(ns, model)
        jm, _ = apps.mask_from_json(json.loads(Path(ns.mask).read_text()))
        out = apps.body_part_compose(model, reference, jm, level=ns.level,
                                     seed=ns.seed)
    else:
        spec = json.loads(Path(ns.rois).read_text())
        source = _reference_tensor(ns, model)
        total = ns.frames or spec.get("total_frames")
        if not total:
            raise UsageError("--frames or total_frames required for ROI mode")
        placements = [
            apps.RoiPlacement(source, r["source_start"], r["source_end"],
                              r["target_start"])
            for r in spec["rois"]
        ]
        out = apps.place_rois(model, placements, total, seed=ns.seed)
    _emit(ns, {"out": _write_motion(out, ns.out), "frames": out.frames})


def _cmd_inpaint(ns):
    from . import apps

    model = _load_model(ns.model)
    reference = _reference_tensor(ns, model)
    _, ranges = apps.mask_from_json(json.loads(Path(ns.mask).read_text()))
    splice = model.pyramid.stage_lengths[model.pyramid.stages_of_level(1)[0] - 1]
    fm = apps.FrameMask(tuple(ranges), splice)
    out = apps.inpaint(model, reference, fm, seed=ns.seed)
    _emit(ns, {"out": _write_motion(out, ns.out), "frames": out.frames})


def _cmd_restyle(ns):
    from . import apps

    model = _load_model(ns.style_model)
    content = _load_clip(ns.content)
    out = apps.restyle(model, content, seed=ns.seed)
    _emit(ns, {"out": _write_motion(out, ns.out), "frames": out.frames})


def _cmd_crowd(ns):
    from . import apps

    model = _load_model(ns.model)
    outs = apps.crowd(model, ns.n, seed=ns.seed)
    out_dir = Path(ns.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        _write_motion(o, str(out_dir / f"crowd_{k:03d}.bvh"))
        for k, o in enumerate(outs)
    ]
    _emit(ns, {"count": len(paths), "out_dir": str(out_dir)})


def _cmd_expand(ns):
    from . import apps

    model = _load_model(ns.model)
    reference = _reference_tensor(ns, model)
    out = apps.expand(model, reference, ns.extra_frames, seed=ns.seed)
    _emit(ns, {"out": _write_motion(out, ns.out), "frames": out.frames})


def _cmd_evaluate(ns):
    from . import apps
    from .evaluation import MetricsConfig, compute_metrics

    model = _load_model(ns.model)
    clip = _load_clip(ns.input) if ns.input else model.input_motion
    if clip is None:
        raise UsageError("--input required: checkpoint has no training clip")
    samples = apps.crowd(model, ns.samples, seed=ns.seed)
    report = compute_metrics(clip, samples, MetricsConfig())
    if ns.csv:
        print("coverage,global_div,local_div,sifid,inter_div,intra_div,harmonic_mean")
        print(report.to_csv_row())
    else:
        _emit(ns, report.to_json_dict())


def _cmd_analyze_cka(ns):
    from .analysis import DEFAULT_PROBE_SEEDS, stage_similarity_matrix, write_similarity_outputs

    model = _load_model(ns.model)
    seeds = DEFAULT_PROBE_SEEDS[: ns.probes]
    report = stage_similarity_matrix(model, seeds)
    paths = write_similarity_outputs(report, ns.out_dir)
    _emit(ns, {"written": paths})


def _cmd_serve(ns):
    import os

    import uvicorn

    from .service import ServiceConfig, create_app

    file_cfg = json.loads(Path(ns.config).read_text()) if ns.config else {}
    root = ns.checkpoint_root or os.environ.get("MONOMOTION_CHECKPOINT_ROOT")
    if not root:
        raise UsageError(
            "pass --checkpoint-root or set MONOMOTION_CHECKPOINT_ROOT"
        )
    budget = ns.latency_budget
    if budget is None:
        budget = float(file_cfg.get("latency_budget_s", 0.2))
    port = ns.port if ns.port is not None else int(file_cfg.get("port", 8080))
    app = create_app(ServiceConfig(checkpoint_root=root, latency_budget_s=budget))
    uvicorn.run(app, host=ns.host, port=port)


_COMMANDS = {
    "train": _cmd_train,
    "generate": _cmd_generate,
    "compose": _cmd_compose,
    "inpaint": _cmd_inpaint,
    "restyle": _cmd_restyle,
    "crowd": _cmd_crowd,
    "expand": _cmd_expand,
    "evaluate": _cmd_evaluate,
    "analyze-cka": _cmd_analyze_cka,
    "serve": _cmd_serve,
}


def cli_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        _COMMANDS[ns.command](ns)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: report, no traceback spam
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
