"""Command-line workbench for spectral analysis, enhancement, schedules, gradient
checks, training and ablations."""

import argparse
import csv
import json
import logging
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from .core import RngState
from .enhance import DeltaSpec, alpha_schedule, build_delta, enhance, schedule_table
from .errors import CheckFailure, ConfigurationError, FileOperationError, NumericError, SDEError
from .gradcheck import run_suite
from .handlers import get_handler, read_matrix, write_matrix
from .harness import (
    LR_SCHEDULES,
    RESULT_COLUMNS,
    SVD_GRAD_MODES,
    VARIANTS,
    ExperimentConfig,
    ExperimentResult,
    ablation_suite,
    run_experiment,
    workers_from_env,
)
from .losses import LOSS_MODES
from .manifest import RunManifest
from .spectral import SUBSPACES, compare_reports, mp_bounds, partition, spectral_report, svd
from .svg import proportions_figure, report_figure, schedule_figure, series_figure, spectra_figure

logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
logger = logging.getLogger(__name__)

# CLI flag -> (config section, key); flags mirror config keys one-to-one.
CONFIG_FLAGS = {
    "latent_dim": ("task", "latent_dim"),
    "nuisance_dim": ("task", "nuisance_dim"),
    "ambient_dim": ("task", "ambient_dim"),
    "pairs": ("task", "pairs"),
    "noise_scale": ("task", "noise_scale"),
    "test_fraction": ("task", "test_fraction"),
    "total_steps": ("train", "total_steps"),
    "batch_size": ("train", "batch_size"),
    "temperature": ("train", "temperature"),
    "k": ("train", "k"),
    "learning_rate": ("train", "learning_rate"),
    "mode": ("train", "mode"),
    "svd_grad": ("train", "svd_grad"),
    "embed_dim": ("train", "embed_dim"),
    "enhance_subspaces": ("train", "enhance_subspaces"),
    "alpha_override": ("train", "alpha_override"),
    "lambda_override": ("train", "lambda_override"),
    "lr_schedule": ("train", "lr_schedule"),
    "warmup_steps": ("train", "warmup_steps"),
    "perturb_fraction": ("train", "perturb_fraction"),
    "variants": ("ablation", "variants"),
    "seeds": ("ablation", "seeds"),
}


def load_config(path: Optional[str]) -> Dict[str, Any]:
    """Raw JSON config sections; an absent path means all defaults."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise FileOperationError(f"Failed to read config: {e}", file=path)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"Config is not valid JSON: {e.msg}", file=path, line=e.lineno, context={"byte_offset": e.pos}
        )
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be an object", file=path, context={"key": "<root>"})
    return data


def merge_config(data: Dict[str, Any], overrides: Dict[str, Any], seed: Optional[int]) -> ExperimentConfig:
    """Overlay command-line values on the file values and validate the result."""
    merged = {section: dict(values) if isinstance(values, dict) else values for section, values in data.items()}
    for flag, value in overrides.items():
        if value is None:
            continue
        section, key = CONFIG_FLAGS[flag]
        target = merged.setdefault(section, {})
        if not isinstance(target, dict):
            continue  # from_dict reports the malformed section
        target[key] = list(value) if isinstance(value, tuple) else value
    if seed is not None:
        for section in ("task", "train"):
            target = merged.setdefault(section, {})
            if isinstance(target, dict):
                target["seed"] = seed
    return ExperimentConfig.from_dict(merged)


def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: str, data: Any) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


class Workbench:
    """Runs one command, writing its artifacts and a manifest into ``out_dir``."""

    def __init__(self, out_dir: str, fmt: str = "csv"):
        self.out_dir = out_dir
        self.fmt = fmt
        self.handler = get_handler(fmt=fmt)
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as e:
            raise FileOperationError(f"Failed to create output directory: {e}", file=out_dir)

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _matrix_name(self, stem: str) -> str:
        return stem + self.handler.file_extensions[0]

    def _emit(self, manifest: RunManifest, name: str, writer, payload) -> str:
        path = self._path(name)
        try:
            writer(path, payload)
        except OSError as e:
            raise FileOperationError(f"Failed to write {name}: {e}", file=path)
        manifest.add(path)
        logger.debug(f"wrote {path}")
        return path

    def _finish(self, manifest: RunManifest) -> RunManifest:
        manifest.write(self.out_dir)
        logger.info(f"{manifest.command}: {len(manifest.artifacts)} artifact(s) in {self.out_dir}")
        return manifest

    def analyze(self, input_path: str, fmt: Optional[str] = None) -> RunManifest:
        """Spectrum, partition, cumulative energy and the three-panel report."""
        manifest = RunManifest("analyze", {"input": input_path, "format": fmt}, None, __version__)
        f = read_matrix(input_path, fmt)
        m, n = f.shape
        dec = svd(f)
        part = partition(dec, m, n)
        report = spectral_report(dec, part)
        bounds = mp_bounds(m, n, part.vartheta)
        labels = np.empty(dec.rank, dtype=object)
        for name in SUBSPACES:
            labels[getattr(part, name)] = name

        self._emit(
            manifest,
            "spectrum.csv",
            lambda p, rows: _write_csv(p, ("index", "sigma", "subspace"), rows),
            [(i, float(s), labels[i]) for i, s in enumerate(dec.sigma)],
        )
        summary = {
            **report.to_dict(),
            "shape": [m, n],
            "rank": dec.rank,
            "mp_lower": bounds.lower,
            "mp_upper": bounds.upper,
            "forced_strong": part.forced_strong,
            "svd_sweeps": dec.sweeps,
        }
        self._emit(manifest, "partition.json", _write_json, summary)
        self._emit(
            manifest,
            "cumulative_energy.csv",
            lambda p, rows: _write_csv(p, ("index", "cumulative_energy"), rows),
            list(enumerate(report.cumulative_energy)),
        )
        self._emit(manifest, "report.svg", _write_text, report_figure(report, dec.sigma))
        return self._finish(manifest)

    def enhance(
        self,
        input_path: str,
        seed: int = 0,
        alpha: Optional[float] = None,
        step: Optional[int] = None,
        total_steps: Optional[int] = None,
        batch_size: Optional[int] = None,
        delta_path: Optional[str] = None,
        subspaces: Sequence[str] = SUBSPACES,
        fmt: Optional[str] = None,
    ) -> RunManifest:
        """Apply one spectral enhancement; a recorded DeltaSpec replays it exactly."""
        schedule = None
        recorded = None
        if delta_path is not None:
            recorded = self._load_delta(delta_path)
            alpha = recorded.alpha
        elif alpha is None:
            if step is None or total_steps is None or batch_size is None:
                raise ConfigurationError(
                    "enhance needs --alpha, --delta or all of --step, --total-steps, --batch-size",
                    context={"key": "alpha"},
                )
            alpha = alpha_schedule(step, total_steps, batch_size)
            schedule = {"step": step, "total_steps": total_steps, "batch_size": batch_size}

        config = {
            "input": input_path,
            "alpha": alpha,
            "schedule": schedule,
            "delta": delta_path,
            "subspaces": list(subspaces),
            "format": self.fmt,
        }
        manifest = RunManifest("enhance", config, seed, __version__)
        f = read_matrix(input_path, fmt)
        m, n = f.shape
        dec = svd(f)
        part = partition(dec, m, n)
        if recorded is None:
            recorded, _ = build_delta(dec, part, alpha, RngState(seed), subspaces)
        enhanced = enhance(f, recorded, dec)

        after = svd(enhanced)
        comparison = compare_reports(spectral_report(dec, part), spectral_report(after, partition(after, m, n)))

        path = self._path(self._matrix_name("enhanced"))
        write_matrix(enhanced, path, self.fmt)
        manifest.add(path)
        self._emit(manifest, "delta.json", _write_json, {**recorded.to_dict(), "schedule": schedule})
        rows = [
            (i, float(before), float(after.sigma[i]) if i < after.rank else 0.0)
            for i, before in enumerate(dec.sigma)
        ]
        self._emit(
            manifest, "spectra.csv", lambda p, r: _write_csv(p, ("index", "sigma_before", "sigma_after"), r), rows
        )
        self._emit(manifest, "comparison.json", _write_json, comparison)
        self._emit(manifest, "spectra.svg", _write_text, spectra_figure(dec.sigma, after.sigma))
        return self._finish(manifest)

    def _load_delta(self, path: str) -> DeltaSpec:
        data = load_config(path)
        try:
            return DeltaSpec.from_dict(data)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed DeltaSpec: {e}", file=path, context={"key": str(e)})

    def schedules(self, total_steps: int, batch_size: int) -> RunManifest:
        config = {"total_steps": total_steps, "batch_size": batch_size}
        manifest = RunManifest("schedules", config, None, __version__)
        table = schedule_table(total_steps, batch_size)
        self._emit(manifest, "schedules.csv", lambda p, r: _write_csv(p, ("t", "alpha", "lambda"), r), table)
        self._emit(manifest, "schedules.svg", _write_text, schedule_figure(table))
        return self._finish(manifest)

    def gradcheck(self, seed: int = 0) -> RunManifest:
        """Run the finite-difference suite; a failing check raises after writing."""
        manifest = RunManifest("gradcheck", {"seed": seed}, seed, __version__)
        suite = run_suite(seed)
        self._emit(manifest, "gradcheck.json", _write_json, suite.to_dict())
        self._finish(manifest)
        if not suite.passed:
            failing = [r.name for r in suite.reports if not r.passed]
            raise CheckFailure(
                f"{len(failing)} gradient check(s) exceed tolerance", context={"checks": failing[:10]}
            )
        return manifest

    def train(self, config: ExperimentConfig) -> RunManifest:
        manifest = RunManifest("train", config.to_dict(), config.train.seed, __version__)
        run = run_experiment(config.task, config.train)

        def write_log(path, records):
            with open(path, "w", encoding="utf-8") as f:
                for record in records:
                    f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

        self._emit(manifest, "train_log.jsonl", write_log, run.log)
        self._emit(manifest, "results.csv", self._write_results, [run.result])
        for side, weights in (("x", run.params.wx), ("y", run.params.wy)):
            path = self._path(self._matrix_name(f"encoder_{side}"))
            write_matrix(weights, path, self.fmt)
            manifest.add(path)
        losses = {
            "feat": [r.report.feat for r in run.log],
            "total": [r.report.total for r in run.log],
        }
        self._emit(manifest, "losses.svg", _write_text, series_figure("Training losses", losses, "loss"))

        rows = [
            [record.schedule.step, side, *(record.components[i][name] for name in SUBSPACES)]
            for record in run.log
            for i, side in enumerate(("x", "y"))
        ]
        self._emit(
            manifest, "components.csv", lambda p, r: _write_csv(p, ("step", "side", *SUBSPACES), r), rows
        )
        shares = {
            side: {name: [record.proportions(i)[name] for record in run.log] for name in SUBSPACES}
            for i, side in enumerate(("x", "y"))
        }
        self._emit(manifest, "components.svg", _write_text, proportions_figure(shares))
        return self._finish(manifest)

    def ablate(self, config: ExperimentConfig, workers: int = 1) -> RunManifest:
        manifest = RunManifest("ablate", {**config.to_dict(), "workers": workers}, None, __version__)
        results = ablation_suite(config.task, config.train, config.ablation, workers)
        self._emit(manifest, "results.csv", self._write_results, results)
        self._emit(
            manifest,
            "results.json",
            _write_json,
            {"rows": [r.to_dict() for r in results], "summary": summarize(results)},
        )
        return self._finish(manifest)

    @staticmethod
    def _write_results(path: str, results: Sequence[ExperimentResult]) -> None:
        _write_csv(path, RESULT_COLUMNS, [r.row() for r in results])


def summarize(results: Sequence[ExperimentResult]) -> Dict[str, Dict[str, float]]:
    """Per-variant means of clean and perturbed Precision@1 and of the drop."""
    summary = {}
    for mode in dict.fromkeys(r.mode for r in results):
        rows = [r for r in results if r.mode == mode]
        summary[mode] = {
            "runs": len(rows),
            "clean_p1": float(np.mean([r.clean_p1 for r in rows])),
            "perturbed_p1": float(np.mean([r.perturbed_p1 for r in rows])),
            "drop": float(np.mean([r.drop for r in rows])),
        }
    return summary


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Unsigned 64-bit seed")
    parser.add_argument("--out", default=".", help="Output directory")
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--format", choices=["csv", "bin"], default="csv", help="Matrix output format")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("task")
    for flag, kind in (
        ("latent-dim", int),
        ("nuisance-dim", int),
        ("ambient-dim", int),
        ("pairs", int),
        ("noise-scale", float),
        ("test-fraction", float),
    ):
        group.add_argument(f"--{flag}", type=kind, default=None)
    group = parser.add_argument_group("train")
    for flag, kind in (
        ("total-steps", int),
        ("batch-size", int),
        ("temperature", float),
        ("k", int),
        ("learning-rate", float),
        ("embed-dim", int),
        ("alpha-override", float),
        ("lambda-override", float),
        ("warmup-steps", int),
        ("perturb-fraction", float),
    ):
        group.add_argument(f"--{flag}", type=kind, default=None)
    group.add_argument("--mode", choices=list(LOSS_MODES), default=None)
    group.add_argument("--svd-grad", choices=list(SVD_GRAD_MODES), default=None)
    group.add_argument("--lr-schedule", choices=list(LR_SCHEDULES), default=None)
    group.add_argument("--enhance-subspaces", nargs="+", choices=list(SUBSPACES), default=None)
    group = parser.add_argument_group("ablation")
    group.add_argument("--variants", nargs="+", choices=list(VARIANTS), default=None)
    group.add_argument("--seeds", nargs="+", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-sde", description="Spectral disentanglement and enhancement workbench"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="Spectral report of a matrix file")
    analyze.add_argument("input", help="Matrix file (.csv, .sdem)")
    _add_common(analyze)

    enh = sub.add_parser("enhance", help="Apply spectral enhancement to a matrix file")
    enh.add_argument("input", help="Matrix file (.csv, .sdem)")
    enh.add_argument("--alpha", type=float, default=None)
    enh.add_argument("--step", type=int, default=None)
    enh.add_argument("--total-steps", type=int, default=None)
    enh.add_argument("--batch-size", type=int, default=None)
    enh.add_argument("--delta", default=None, help="Replay a recorded delta.json")
    enh.add_argument("--enhance-subspaces", nargs="+", choices=list(SUBSPACES), default=list(SUBSPACES))
    _add_common(enh)

    sched = sub.add_parser("schedules", help="Dump alpha(t) and lambda(t)")
    sched.add_argument("--total-steps", type=int, default=1000)
    sched.add_argument("--batch-size", type=int, default=256)
    _add_common(sched)

    grad = sub.add_parser("gradcheck", help="Analytic gradients against finite differences")
    _add_common(grad)

    for name, text in (("train", "Train the synthetic harness"), ("ablate", "Run the ablation grid")):
        cmd = sub.add_parser(name, help=text)
        _add_common(cmd)
        _add_experiment_flags(cmd)
    return parser


def run(args: argparse.Namespace) -> RunManifest:
    bench = Workbench(args.out, args.format)
    if args.command == "analyze":
        return bench.analyze(args.input)
    if args.command == "enhance":
        return bench.enhance(
            args.input,
            seed=args.seed if args.seed is not None else 0,
            alpha=args.alpha,
            step=args.step,
            total_steps=args.total_steps,
            batch_size=args.batch_size,
            delta_path=args.delta,
            subspaces=tuple(args.enhance_subspaces),
        )
    if args.command == "schedules":
        return bench.schedules(args.total_steps, args.batch_size)
    if args.command == "gradcheck":
        return bench.gradcheck(args.seed if args.seed is not None else 0)

    overrides = {flag: getattr(args, flag) for flag in CONFIG_FLAGS}
    config = merge_config(load_config(args.config), overrides, args.seed)
    if args.command == "train":
        return bench.train(config)
    return bench.ablate(config, workers_from_env())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        run(args)
    except SDEError as e:
        detail = f" {e.context}" if e.context else ""
        where = f" in {e.file}" if e.file else ""
        logger.error(f"{e.level.value} {e.code}: {e.message}{where}{detail}")
        return e.exit_code
    except Exception as e:
        error = NumericError(str(e), context={"error_type": type(e).__name__})
        logger.error(f"Unexpected error: {error.message}")
        return error.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
