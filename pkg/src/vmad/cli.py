"""Command-line front end.

Every option can come from (highest precedence first) a command-line flag,
an environment variable ``VMAD_<OPTION>`` (upper case, dashes as
underscores), a flat ``key = value`` file given with ``--config``, or the
built-in default. The resolved configuration of each run is written next to
its outputs as ``*.run.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import MissingFile, MissingLabel, ParseError, VmadError
from .fusion import FusedRow, apply_strategy, format_fused, fused_rows, parse_fused, parse_strategies
from .io import atomic_write_text
from .metrics import (
    LabeledScoreSet,
    det_curve,
    det_svg,
    eer,
    format_det,
    format_summary,
    summarize,
)
from .model import Dataset, Label, format_manifest, format_score_rows, iter_score_rows, load_manifest, load_score_table
from .quality import FILTER_SIZE, HIST_BINS, defocus, illumination_uniformity, read_gray_image
from .synth import ScenarioConfig, generate_scenario, reference_scale_config
from . import svr

log = logging.getLogger("vmad")

ENV_PREFIX = "VMAD_"


class CommandError(VmadError):
    pass


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[str], Any] = str
    default: Any = None
    required: bool = False
    help: str = ""
    multiple: bool = False
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")

    @property
    def env(self) -> str:
        return ENV_PREFIX + self.dest.upper()


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# -- configuration -----------------------------------------------------------


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected key = value", lineno)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _convert(opt: Opt, value: Any, from_text: bool) -> Any:
    if opt.flag:
        return _bool(value) if from_text else bool(value)
    if opt.multiple:
        items = [v.strip() for v in value.split(",") if v.strip()] if from_text else list(value)
        return [opt.type(v) for v in items]
    return opt.type(value)


def resolve(opts: list[Opt], args: argparse.Namespace, file_values: dict[str, str]) -> tuple[dict, dict, dict]:
    """Merge flags > environment > config file > defaults."""
    known = {o.dest for o in opts}
    unknown = set(file_values) - known - {"config"}
    if unknown:
        raise CommandError(f"unknown config keys: {sorted(unknown)}")
    resolved, sources, flags = {}, {}, {}
    for o in opts:
        flag_value = getattr(args, o.dest, None)
        if o.flag and flag_value is False:
            flag_value = None
        try:
            if flag_value is not None:
                flags[o.dest] = flag_value
                resolved[o.dest], sources[o.dest] = _convert(o, flag_value, False), "flag"
            elif o.env in os.environ:
                resolved[o.dest], sources[o.dest] = _convert(o, os.environ[o.env], True), "env"
            elif o.dest in file_values:
                resolved[o.dest], sources[o.dest] = _convert(o, file_values[o.dest], True), "file"
            elif o.required:
                raise CommandError(f"--{o.name} is required (flag, {o.env}, or config file)")
            else:
                resolved[o.dest], sources[o.dest] = o.default, "default"
        except ValueError as exc:
            raise CommandError(f"--{o.name}: {exc}") from None
    return resolved, sources, flags


def _jsonable(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_run_record(path: Path, command: str, resolved: dict, sources: dict, file_values: dict, config: str | None):
    record = {
        "command": command,
        "version": __version__,
        "config_file": config,
        "file_values": file_values,
        "resolved": {k: _jsonable(v) for k, v in resolved.items()},
        "sources": sources,
    }
    atomic_write_text(path, json.dumps(record, indent=2, sort_keys=True) + "\n")


# -- shared helpers ----------------------------------------------------------


def _load_dataset(manifest: str, scores: list[str] | None) -> Dataset:
    dataset = load_manifest(manifest)
    for path in scores or ():
        dataset = load_score_table(path, dataset)
    return dataset


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=-]+", "_", text).strip("_")


def _group_fused(rows: list[FusedRow]) -> dict[str, LabeledScoreSet]:
    groups: dict[str, tuple[list[float], list[float]]] = {}
    for r in rows:
        if r.label is None:
            raise MissingLabel(f"{r.document}/{r.sequence}: evaluation needs ground-truth labels")
        b, m = groups.setdefault(r.strategy, ([], []))
        (b if r.label is Label.BONAFIDE else m).append(r.value)
    out = {}
    for name, (b, m) in groups.items():
        try:
            out[name] = LabeledScoreSet(np.array(b), np.array(m))
        except VmadError as exc:
            raise type(exc)(f"strategy {name}: {exc}") from None
    return out


def _read_fused(path: str) -> list[FusedRow]:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"fused score table not found: {p}")
    return parse_fused(p.read_text(encoding="utf-8"))


# -- commands ----------------------------------------------------------------


def cmd_quality(cfg: dict) -> list[Path]:
    dataset = load_manifest(cfg["manifest"])
    root = Path(cfg["image_root"]) if cfg["image_root"] else Path(cfg["manifest"]).resolve().parent
    rows = []
    for seq in dataset.sequences:
        for frame in seq.frames:
            fid = f"{seq.id}/{frame.id}"
            if frame.image_path is None:
                log.warning("frame %s has no image; skipped", fid)
                continue
            path = Path(frame.image_path)
            if not path.is_absolute():
                path = root / path
            try:
                image = read_gray_image(path)
                if frame.image_size is not None and frame.image_size != (image.width, image.height):
                    raise CommandError(
                        f"image is {image.width}x{image.height}, manifest says {frame.image_size[0]}x{frame.image_size[1]}"
                    )
                illum = illumination_uniformity(image, frame.face_box, bins=cfg["bins"])
                sharp = defocus(image, frame.face_box, size=cfg["filter_size"])
            except VmadError as exc:
                raise CommandError(f"frame {fid}: {exc}") from exc
            rows.append((seq.id, frame.id, "q:illum", illum, None))
            rows.append((seq.id, frame.id, "q:defocus", sharp, None))
    out = Path(cfg["out"])
    atomic_write_text(out, format_score_rows(rows))
    return [out]


def cmd_fuse(cfg: dict) -> list[Path]:
    dataset = _load_dataset(cfg["manifest"], cfg["scores"])
    strategies = parse_strategies(cfg["strategies"], cfg["mad_track"])
    if not strategies:
        raise CommandError("no fusion strategies given")
    rows: list[FusedRow] = []
    for strategy in strategies:
        rows.extend(fused_rows(apply_strategy(dataset, strategy)))
    out = Path(cfg["out"])
    atomic_write_text(out, format_fused(rows))
    return [out]


def cmd_eval(cfg: dict) -> list[Path]:
    groups = _group_fused(_read_fused(cfg["fused"]))
    if not groups:
        raise CommandError("fused table has no rows")
    out = Path(cfg["out"])
    interpolate = cfg["eer_mode"] == "interp"
    summaries, curves, written = [], [], []
    for idx, (name, scores) in enumerate(groups.items()):
        curve = det_curve(scores)
        summaries.append(summarize(name, curve, interpolate=interpolate))
        curves.append((name, curve))
        det_path = out / "det" / f"{idx:02d}_{_slug(name)}.csv"
        atomic_write_text(det_path, format_det(curve))
        written.append(det_path)
    summary_path = out / "summary.csv"
    atomic_write_text(summary_path, format_summary(summaries))
    written.insert(0, summary_path)
    if cfg["svg"]:
        svg_path = out / "det.svg"
        atomic_write_text(svg_path, det_svg(curves))
        written.append(svg_path)
    for s in summaries:
        print(f"{s.strategy}: EER={s.eer:.4f} B10={s.bpcer10:.4f} B20={s.bpcer20:.4f} B100={s.bpcer100:.4f}")
    return written


def cmd_det_export(cfg: dict) -> list[Path]:
    groups = _group_fused(_read_fused(cfg["fused"]))
    name = cfg["strategy"]
    if name is None:
        if len(groups) != 1:
            raise CommandError(f"table holds {len(groups)} strategies; pick one with --strategy")
        name = next(iter(groups))
    if name not in groups:
        raise CommandError(f"strategy {name!r} not in table (have: {', '.join(groups)})")
    curve = det_curve(groups[name])
    out = Path(cfg["out"])
    atomic_write_text(out, format_det(curve))
    written = [out]
    if cfg["svg_out"]:
        svg_path = Path(cfg["svg_out"])
        atomic_write_text(svg_path, det_svg([(name, curve)]))
        written.append(svg_path)
    return written


def _layout_from(cfg: dict) -> svr.FeatureLayout:
    return svr.parse_layout(cfg["layout"], max_frames=cfg["max_frames"], pad_value=cfg["pad_value"])


def _eer_of(attempts, values) -> float | None:
    b = [v for a, v in zip(attempts, values) if a.label is Label.BONAFIDE]
    m = [v for a, v in zip(attempts, values) if a.label is Label.MORPH]
    if not b or not m:
        return None
    return eer(det_curve(LabeledScoreSet(np.array(b), np.array(m))))[0]


def kkt_residuals(model: svr.SvrModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|f(x_i) - y_i| for non-bound support vectors of a trained model."""
    free = (np.abs(model.dual_coefficients) > 0) & (np.abs(model.dual_coefficients) < model.c)
    if not np.any(free):
        return np.empty(0)
    sv = model.support_vectors[free]
    # match support vectors back to training rows
    idx = [int(np.flatnonzero(np.all(X == v, axis=1))[0]) for v in sv]
    return np.abs(svr.predict_raw(model, sv) - y[idx])


def cmd_train(cfg: dict) -> list[Path]:
    dataset = _load_dataset(cfg["manifest"], cfg["scores"])
    train, test = svr.split_dataset(list(dataset.attempts), cfg["fraction"], cfg["seed"])
    layout = svr.fit_layout(_layout_from(cfg), dataset, train)
    X_train = svr.feature_matrix(dataset, train, layout)
    y_train = svr.targets_for(train)
    model = svr.train_svr(
        X_train,
        y_train,
        c=cfg["c"],
        gamma=cfg["gamma"],
        epsilon=cfg["epsilon"],
        tol=cfg["tol"],
        max_iter=cfg["max_iter"],
        layout=layout,
    )
    out = Path(cfg["out"])
    svr.save_model(model, out)

    X_test = svr.feature_matrix(dataset, test, layout)
    residuals = kkt_residuals(model, X_train, y_train)
    report = {
        "iterations": model.iterations,
        "dual_objective": model.objective,
        "n_support": model.n_support,
        "n_free_support": int(residuals.size),
        "max_free_residual": float(residuals.max()) if residuals.size else None,
        "min_free_residual": float(residuals.min()) if residuals.size else None,
        "dual_sum": float(model.dual_coefficients.sum()),
        "n_train": len(train),
        "n_test": len(test),
        "train_eer": _eer_of(train, svr.predict(model, X_train)),
        "test_eer": _eer_of(test, svr.predict(model, X_test)) if test else None,
        "layout": layout.spec,
        "dimension": layout.dimension,
    }
    report_path = Path(cfg["report"]) if cfg["report"] else out.with_name(out.name + ".report.json")
    atomic_write_text(report_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(
        f"trained on {len(train)} attempts: {model.n_support} support vectors, "
        f"{model.iterations} iterations, train EER {report['train_eer']}, test EER {report['test_eer']}"
    )
    return [out, report_path]


def cmd_predict(cfg: dict) -> list[Path]:
    layout = _layout_from(cfg) if cfg["layout"] else None
    model = svr.load_model(cfg["model"], layout)
    dataset = _load_dataset(cfg["manifest"], cfg["scores"])
    attempts = list(dataset.attempts)
    if cfg["subset"] != "all":
        if cfg["seed"] is None:
            raise CommandError("--seed is required to reproduce a train/test split")
        train, test = svr.split_dataset(attempts, cfg["fraction"], cfg["seed"])
        attempts = train if cfg["subset"] == "train" else test
    X = svr.feature_matrix(dataset, attempts, model.layout)
    values = np.atleast_1d(svr.predict(model, X)) if attempts else []
    name = "svr=" + "+".join(model.layout.tracks)
    rows = [FusedRow(a.document, a.sequence, a.label, name, float(v)) for a, v in zip(attempts, values)]
    out = Path(cfg["out"])
    atomic_write_text(out, format_fused(rows))
    return [out]


def cmd_simulate(cfg: dict) -> list[Path]:
    base = reference_scale_config() if cfg["preset"] == "reference" else ScenarioConfig()
    if cfg["scenario"]:
        path = Path(cfg["scenario"])
        if not path.is_file():
            raise MissingFile(f"scenario file not found: {path}")
        merged = {**base.to_dict(), **json.loads(path.read_text(encoding="utf-8"))}
        base = ScenarioConfig.from_dict(merged)
    scenario = replace(base, seed=cfg["seed"])
    dataset = generate_scenario(scenario)
    out = Path(cfg["out"])
    paths = [out / "manifest.csv", out / "scores.csv", out / "scenario.json"]
    atomic_write_text(paths[0], format_manifest(dataset))
    atomic_write_text(paths[1], format_score_rows(iter_score_rows(dataset)))
    atomic_write_text(paths[2], json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n")
    counts = dataset.labeled_counts()
    print(
        f"{len(dataset.attempts)} attempts ({counts[Label.BONAFIDE]} bona fide, {counts[Label.MORPH]} morph), "
        f"{dataset.frame_count()} frames"
    )
    return paths


# -- wiring ------------------------------------------------------------------

_SCORES = Opt("scores", multiple=True, default=[], help="score table(s); repeat the flag or comma-separate")
_LAYOUT_OPTS = [
    Opt("max-frames", int, svr.DEFAULT_MAX_FRAMES, help="frames per track after padding/clipping"),
    Opt("pad-value", float, 0.0, help="value used to pad short sequences"),
]
_SPLIT_OPTS = [Opt("fraction", float, 0.5, help="training fraction")]

COMMANDS: dict[str, tuple[Callable[[dict], list[Path]], list[Opt], str, str]] = {
    "quality": (
        cmd_quality,
        [
            Opt("manifest", required=True),
            Opt("image-root", help="directory relative image paths resolve against (default: manifest dir)"),
            Opt("out", required=True, help="output score table"),
            Opt("bins", int, HIST_BINS, help="luminance histogram bins"),
            Opt("filter-size", int, FILTER_SIZE, help="mean filter size"),
        ],
        "compute q:illum and q:defocus tracks from frame images",
        "file",
    ),
    "fuse": (
        cmd_fuse,
        [
            Opt("manifest", required=True),
            _SCORES,
            Opt(
                "strategies",
                default="avg,med,vote",
                help="comma list: avg, med, mxd, vote[=thr|=lo:hi:step], rnd=SEED, "
                "wavg=Q[|norm][|sum], best=Q[|norm]; norm is identity, 100, median[:value]",
            ),
            Opt("mad-track", required=True, help="MAD track to fuse, e.g. mad:dfr"),
            Opt("out", required=True, help="output fused score table"),
        ],
        "fuse per-frame scores into one score per attempt",
        "file",
    ),
    "eval": (
        cmd_eval,
        [
            Opt("fused", required=True),
            Opt("out", required=True, help="output directory"),
            Opt("eer-mode", default="interp", help="interp (linear interpolation) or midpoint"),
            Opt("svg", flag=True, default=False, help="also draw det.svg"),
        ],
        "EER and BPCER at APCER 10, 5 and 1 percent, plus DET curves",
        "dir",
    ),
    "det-export": (
        cmd_det_export,
        [
            Opt("fused", required=True),
            Opt("strategy", help="strategy name (needed when the table holds several)"),
            Opt("out", required=True, help="DET table output"),
            Opt("svg-out", help="optional SVG plot path"),
        ],
        "export one DET curve",
        "file",
    ),
    "train": (
        cmd_train,
        [
            Opt("manifest", required=True),
            _SCORES,
            Opt("layout", required=True, help="feature tracks, e.g. mad:dfr,q:magface|median,q:illum|100"),
            *_LAYOUT_OPTS,
            Opt("c", float, svr.DEFAULT_C),
            Opt("gamma", float, svr.DEFAULT_GAMMA),
            Opt("epsilon", float, svr.DEFAULT_EPSILON),
            Opt("tol", float, svr.DEFAULT_TOL),
            Opt("max-iter", int, svr.DEFAULT_MAX_ITER),
            Opt("seed", int, required=True, help="split seed"),
            *_SPLIT_OPTS,
            Opt("out", required=True, help="model file"),
            Opt("report", help="training report (default: <out>.report.json)"),
        ],
        "train the SVR fuser on a document-grouped split",
        "file",
    ),
    "predict": (
        cmd_predict,
        [
            Opt("model", required=True),
            Opt("manifest", required=True),
            _SCORES,
            Opt("layout", help="expected layout; must match the model"),
            *_LAYOUT_OPTS,
            Opt("subset", default="all", help="all, train or test"),
            Opt("seed", int, help="split seed (required unless --subset all)"),
            *_SPLIT_OPTS,
            Opt("out", required=True, help="output fused score table"),
        ],
        "score attempts with a trained SVR model",
        "file",
    ),
    "simulate": (
        cmd_simulate,
        [
            Opt("preset", default="default", help="default or reference (60 subjects, 205/1142 documents)"),
            Opt("scenario", help="JSON file overriding scenario fields"),
            Opt("seed", int, required=True),
            Opt("out", required=True, help="output directory"),
        ],
        "generate a synthetic dataset (manifest + score table)",
        "dir",
    ),
}

_CHOICES = {"eer_mode": ("interp", "midpoint"), "subset": ("all", "train", "test"), "preset": ("default", "reference")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vmad",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"vmad {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, opts, help_text, _) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="flat key = value configuration file")
        for o in opts:
            extra = f" [env {o.env}]"
            if o.default not in (None, [], False):
                extra += f" (default: {o.default})"
            if o.flag:
                p.add_argument(f"--{o.name}", action="store_true", default=None, help=o.help + extra)
            elif o.multiple:
                p.add_argument(f"--{o.name}", action="append", default=None, help=o.help + extra)
            else:
                p.add_argument(f"--{o.name}", default=None, help=o.help + extra)
    return parser


def _expand_multiple(opts: list[Opt], args: argparse.Namespace) -> None:
    for o in opts:
        if o.multiple and getattr(args, o.dest, None) is not None:
            setattr(args, o.dest, [v.strip() for item in getattr(args, o.dest) for v in item.split(",") if v.strip()])


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    handler, opts, _, out_kind = COMMANDS[args.command]
    try:
        file_values = read_config_file(args.config) if args.config else {}
        _expand_multiple(opts, args)
        cfg, sources, _ = resolve(opts, args, file_values)
        for key, allowed in _CHOICES.items():
            if key in cfg and cfg[key] not in allowed:
                raise CommandError(f"--{key.replace('_', '-')} must be one of {', '.join(allowed)}")
        handler(cfg)
        out = Path(cfg["out"])
        record = out / "run.json" if out_kind == "dir" else out.with_name(out.name + ".run.json")
        write_run_record(record, args.command, cfg, sources, file_values, args.config)
    except VmadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
