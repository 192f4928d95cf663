"""Command-line entry point: ``ano {train,eval,gradcheck,spectrum,oracle,paramcount}``.

Exit codes: 0 success, 1 a check failed its tolerance, 2 invalid
configuration or checkpoint, 3 missing or malformed data.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .autodiff import gradient_check
from .circuit import CircuitConfig, count_parameters, describe, group_observables
from .data import DataConfig, load_task
from .errors import ConfigError, FormatError, InputError
from .observables import eigen_spectrum, rayleigh_bounds
from .oracles import closed_form_suite, dense_kron_suite
from .train import (
    JsonlWriter,
    TrainConfig,
    evaluate_accuracy,
    fit,
    load_checkpoint,
    per_class_accuracy,
    save_checkpoint,
    summarize_trials,
)

log = logging.getLogger("anovqc")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3
ORACLE_TOLERANCE = 1e-10
GRADCHECK_TOLERANCE = 1e-5
PAULI_TOLERANCE = 1e-9

DEFAULT_CIRCUIT = {
    "n_qubits": 4,
    "d_out": 2,
    "n_layers": 4,
    "use_rotations": True,
    "encoding_axis": "y",
    "scheme": {"kind": "sliding_k_local", "k": 2, "subset": None},
}


def _train_defaults() -> dict:
    d = asdict(TrainConfig())
    d.pop("seed")  # each trial's seed is derived from the run seed
    return d


@dataclass
class RunConfig:
    task: str = "banknote"
    seed: int = 0
    n_trials: int = 1
    out_dir: str = "runs/default"
    circuit: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CIRCUIT))
    train: dict = field(default_factory=lambda: _train_defaults())
    data: dict = field(default_factory=lambda: asdict(DataConfig()))

    def circuit_config(self) -> CircuitConfig:
        return CircuitConfig.from_dict(self.circuit)

    def train_config(self, seed: int) -> TrainConfig:
        try:
            return TrainConfig(**dict(self.train, seed=seed))
        except TypeError as exc:
            raise ConfigError(f"bad train section: {exc}") from None

    def data_config(self) -> DataConfig:
        try:
            return DataConfig(**self.data)
        except TypeError as exc:
            raise ConfigError(f"bad data section: {exc}") from None

    def validate(self) -> None:
        if self.task not in ("banknote", "mnist"):
            raise ConfigError(f"task must be 'banknote' or 'mnist', got {self.task!r}")
        if not isinstance(self.n_trials, int) or self.n_trials < 1:
            raise ConfigError(f"n_trials must be a positive integer, got {self.n_trials!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**63:
            raise ConfigError(f"seed must be a non-negative 64-bit integer, got {self.seed!r}")
        self.circuit_config()
        self.train_config(self.seed)
        self.data_config()


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value`` (value parsed as YAML) to a nested config dict."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key.path=value")
    path, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    keys = path.strip().split(".")
    update: dict = value
    for key in reversed(keys):
        update = {key: update}
    return _merge(doc, update)


def load_run_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    doc = asdict(RunConfig())
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            loaded = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        doc = _merge(doc, loaded)
    for item in overrides:
        doc = apply_override(doc, item)
    run = RunConfig(**doc)
    run.validate()
    return run


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    run = load_run_config(args.config, args.overrides)
    if args.seed is not None:
        run.seed = args.seed
    if args.trials is not None:
        run.n_trials = args.trials
    if args.out is not None:
        run.out_dir = args.out
    if args.data_dir is not None:
        run.data["data_dir"] = args.data_dir
    run.validate()

    circuit = run.circuit_config()
    data_cfg = run.data_config()
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(asdict(run), sort_keys=False), encoding="utf-8")
    n_params = count_parameters(circuit)
    log.info("%s: %s, %d parameters", run.task, describe(circuit), n_params)

    finals, trials = [], []
    for t in range(run.n_trials):
        seed = run.seed + t
        train_cfg = run.train_config(seed)
        train, test, stats = load_task(run.task, data_cfg, seed)
        trial_dir = out / f"trial_{t:03d}"
        trial_dir.mkdir(exist_ok=True)
        with JsonlWriter(trial_dir / "metrics.jsonl") as metrics, JsonlWriter(trial_dir / "timing.jsonl") as timing:

            def on_epoch(m):
                metrics.write(m.record())
                timing.write({"epoch": m.epoch, "wall_time_s": m.wall_time})
                log.info("trial %d epoch %d loss %.5f test acc %.4f (%.1fs)", t, m.epoch, m.train_loss, m.test_accuracy, m.wall_time)

            params, history = fit(train, train_cfg, circuit, test, on_epoch)
        final = history[-1].test_accuracy
        extra = {
            "task": run.task,
            "split_seed": seed,
            "data": asdict(data_cfg),
            "standardizer": stats.to_dict(),
            "final_test_accuracy": final,
        }
        save_checkpoint(trial_dir / "checkpoint.json", params, circuit, extra)
        finals.append(final)
        trials.append({"trial": t, "seed": seed, "final_test_accuracy": final, "final_train_loss": history[-1].train_loss})

    summary = dict(summarize_trials(finals), task=run.task, param_count=n_params, circuit=describe(circuit), trials=trials)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(json.dumps({k: summary[k] for k in ("mean_test_accuracy", "std_test_accuracy", "n_trials", "param_count")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    params, circuit, extra = load_checkpoint(args.checkpoint)
    try:
        task = extra["task"]
        data = DataConfig(**extra["data"])
        seed = int(extra["split_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"checkpoint lacks data provenance: {exc}") from None
    if args.data_dir is not None:
        data.data_dir = args.data_dir
    _, test, _ = load_task(task, data, seed)
    if test.n_features != circuit.n_qubits:
        raise ConfigError(f"data has {test.n_features} features but the checkpoint circuit has {circuit.n_qubits} qubits")
    report = {
        "task": task,
        "n_test": len(test),
        "accuracy": evaluate_accuracy(params, circuit, test),
        "per_class_accuracy": {str(k): v for k, v in per_class_accuracy(params, circuit, test).items()},
    }
    print(json.dumps(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.config is None and not args.overrides:
        circuit = CircuitConfig.from_dict(
            dict(DEFAULT_CIRCUIT, n_qubits=3, d_out=2, n_layers=2, scheme={"kind": "sliding_k_local", "k": 2})
        )
    else:
        circuit = load_run_config(args.config, args.overrides).circuit_config()
    seed = 0 if args.seed is None else args.seed
    ok = True
    for loss_kind in ("mse", "cross_entropy"):
        report = gradient_check(circuit, seed=seed, loss_kind=loss_kind, theta_method="shift")
        for name, err in report.items():
            passed = err <= GRADCHECK_TOLERANCE
            ok &= passed
            print(f"{loss_kind:13s} {name:5s} max relative error {err:.3e} {'ok' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_spectrum(args) -> int:
    params, circuit, _ = load_checkpoint(args.checkpoint)
    groups = circuit.groups
    if not 0 <= args.group < len(groups):
        raise ConfigError(f"group index {args.group} out of range 0..{len(groups) - 1}")
    H = group_observables(params, circuit)[args.group]
    w = eigen_spectrum(H)
    lo, hi = rayleigh_bounds(H)
    inside = lo >= -1 - PAULI_TOLERANCE and hi <= 1 + PAULI_TOLERANCE
    print(f"group {args.group} on qubits {groups[args.group]}")
    print("eigenvalues: " + " ".join(_fmt(v) for v in w))
    print(f"rayleigh bounds: ({_fmt(lo)}, {_fmt(hi)}), within Pauli class: {'true' if inside else 'false'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    suites = {"closedform", "densekron", "all"}
    if args.suite not in suites:
        raise ConfigError(f"unknown suite {args.suite!r}; expected one of {sorted(suites)}")
    seed = 0 if args.seed is None else args.seed
    worst = 0.0
    if args.suite in ("closedform", "all"):
        dev = closed_form_suite(seed=seed)
        print(f"closedform max deviation {dev:.3e}")
        worst = max(worst, dev)
    if args.suite in ("densekron", "all"):
        for name, dev in dense_kron_suite(seed=seed).items():
            print(f"densekron {name} max deviation {dev:.3e}")
            worst = max(worst, dev)
    ok = worst <= ORACLE_TOLERANCE
    print(f"max deviation {worst:.3e} {'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_paramcount(args) -> int:
    circuit = load_run_config(args.config, args.overrides).circuit_config()
    print(json.dumps({"circuit": describe(circuit), "param_count": count_parameters(circuit)}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ano", description="Variational classifiers with trainable observables.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p, overrides=True):
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--seed", type=int)
        if overrides:
            p.add_argument("overrides", nargs="*", help="dotted overrides, e.g. circuit.scheme.k=3")

    p = sub.add_parser("train", help="train n_trials seeded models and write metrics, checkpoints and a summary")
    with_config(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--trials", type=int)
    p.add_argument("--data-dir", help="data root (default: $ANO_DATA_DIR)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test split")
    p.add_argument("checkpoint")
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    with_config(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("spectrum", help="eigenvalues of one trained group observable")
    p.add_argument("checkpoint")
    p.add_argument("--group", type=int, default=0, help="0-based group index")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("oracle", help="run an oracle-equivalence suite")
    p.add_argument("suite", help="closedform, densekron or all")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("paramcount", help="print the trainable parameter count of a config")
    with_config(p)
    p.set_defaults(func=cmd_paramcount)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
