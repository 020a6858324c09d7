"""Experiment runner CLI.

    pcn <experiment> [--seeds N] [--steps N] [--step-size X] [--out DIR]
                     [--config FILE] [--mnist-images PATH --mnist-labels PATH]

Every experiment writes ``<name>.csv`` (long form, seed column), a
``<name>_summary.csv`` aggregation where applicable, and
``<name>_checks.csv`` with pass/fail threshold checks.  Exit code 0 when
every check passes, 1 when any fails, 2 on usage errors.

Option precedence: command-line flags override ``key = value`` lines from
--config, which override built-in defaults.  Digit experiments read IDX
files when the --mnist-* paths are given and otherwise fall back to the
bundled procedural glyph digits, so they run offline end to end.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import fetch_mnist
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment

_CONFIG_KEYS = {
    "seeds": int,
    "steps": int,
    "step_size": float,
    "weight_lr": float,
    "epochs": int,
    "digits": int,
    "batch_size": int,
    "base_seed": int,
    "out": str,
    "ratios": str,
    "mnist_images": str,
    "mnist_labels": str,
    "mnist_test_images": str,
    "mnist_test_labels": str,
}


def _parse_ratios(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad ratio list {text!r}") from exc


def _read_config(path: Path) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _CONFIG_KEYS[key](value.strip())
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcn",
        description="Deterministic experiment runner for the predictive-coding engine.",
    )
    parser.add_argument("experiment", help="experiment name, or 'list' to enumerate")
    parser.add_argument("--seeds", type=int, default=None, help="number of seeds")
    parser.add_argument("--steps", type=int, default=None, help="inference step budget")
    parser.add_argument("--step-size", type=float, default=None, help="inference step size")
    parser.add_argument("--weight-lr", type=float, default=None, help="weight learning rate")
    parser.add_argument("--epochs", type=int, default=None, help="training epochs")
    parser.add_argument("--ratios", type=_parse_ratios, default=None,
                        help="comma-separated precision ratios")
    parser.add_argument("--digits", type=int, default=None, help="digit count for fig4c")
    parser.add_argument("--batch-size", type=int, default=None, help="minibatch size")
    parser.add_argument("--base-seed", type=int, default=None, help="first seed of the run")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default ./out)")
    parser.add_argument("--config", type=Path, default=None, help="key = value config file")
    parser.add_argument("--mnist-images", type=Path, default=None)
    parser.add_argument("--mnist-labels", type=Path, default=None)
    parser.add_argument("--mnist-test-images", type=Path, default=None)
    parser.add_argument("--mnist-test-labels", type=Path, default=None)
    return parser


def _list_experiments() -> None:
    width = max(len(name) for name in EXPERIMENTS)
    for name, (_, description) in EXPERIMENTS.items():
        print(f"{name:<{width}}  {description}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.experiment == "list":
        _list_experiments()
        return 0

    if args.experiment == "fetch-mnist":
        out = args.out or Path("mnist")
        try:
            paths = fetch_mnist(out)
        except Exception as exc:  # noqa: BLE001 - network helper, report and fail
            print(f"fetch failed: {exc}", file=sys.stderr)
            return 1
        for stem, path in paths.items():
            print(f"{stem}: {path}")
        return 0

    if args.experiment not in EXPERIMENTS:
        print(f"unknown experiment {args.experiment!r}; try 'pcn list'", file=sys.stderr)
        return 2

    file_values: dict = {}
    if args.config is not None:
        try:
            file_values = _read_config(args.config)
        except (OSError, ValueError) as exc:
            print(f"bad config: {exc}", file=sys.stderr)
            return 2

    def pick(flag_name: str, file_key: str, default=None):
        flag = getattr(args, flag_name)
        if flag is not None:
            return flag
        if file_key in file_values:
            return file_values[file_key]
        return default

    ratios = pick("ratios", "ratios")
    if isinstance(ratios, str):
        ratios = _parse_ratios(ratios)

    cfg = ExperimentConfig(
        experiment=args.experiment,
        out_dir=Path(pick("out", "out", "out")),
        seeds=pick("seeds", "seeds"),
        steps=pick("steps", "steps"),
        step_size=pick("step_size", "step_size"),
        weight_lr=pick("weight_lr", "weight_lr"),
        epochs=pick("epochs", "epochs"),
        ratios=ratios,
        digits=pick("digits", "digits"),
        batch_size=pick("batch_size", "batch_size"),
        base_seed=pick("base_seed", "base_seed", 0),
        mnist_images=pick("mnist_images", "mnist_images"),
        mnist_labels=pick("mnist_labels", "mnist_labels"),
        mnist_test_images=pick("mnist_test_images", "mnist_test_images"),
        mnist_test_labels=pick("mnist_test_labels", "mnist_test_labels"),
    )

    result = run_experiment(cfg)
    for path in result.files:
        print(f"wrote {path}")
    if result.failures:
        for name in result.failures:
            print(f"FAIL {name}", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
