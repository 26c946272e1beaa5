"""``traj-shapley`` command line.

Every subcommand resolves a :class:`RunConfig` from built-in defaults, an
optional JSON file (``--config``) and explicit flags, in that order of
precedence, and prints it as the first line of output. Results are written
to ``--out``; rerunning with the same config and inputs reproduces them byte
for byte, whatever ``--workers`` is.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, fields
from typing import Sequence

from .aggregate import GlobalReport, aggregate, bar_chart_svg, compare_reports, comparison_csv, report_json
from .attribution import AttributionSettings, LocalAttribution, attribute_all
from .errors import TrajShapleyError
from .metrics import Loss, LossKind, diff_table_csv, interaction_diff_table
from .predictor import (
    ConstantVelocityPredictor,
    Dims,
    ModelParams,
    SocialPredictor,
    TrainHyper,
    build_batch,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .scene import Dataset, enumerate_queries, load_manifest, write_dataset
from .synth import SynthConfig, generate_dataset, write_labels

PROG = "traj-shapley"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    # paths
    manifest: str | None = None
    labels: str | None = None
    checkpoint: str | None = None
    attributions: str | None = None
    report_a: str | None = None
    report_b: str | None = None
    out: str | None = None
    svg: str | None = None
    # queries
    h: int = 4
    horizon: int = 6
    stride: int = 1
    radius: float = 4.0
    n_max: int | None = None
    # loss
    loss: str = "NLL"
    num_samples: int = 20
    # attribution
    method: str = "exact"
    num_permutations: int = 200
    replacements: int = 10
    exact_cap: int = 12
    inject: str = "0"  # a count, or "match"
    # synthetic corpus
    num_scenes: int = 120
    agents_per_scene: int = 10
    steps: int = 20
    dt: float = 0.4
    goal_gain: float = 0.5
    repulsion_gain: float = 3.0
    noise_std: float = 0.05
    interactive: bool = True
    # model and training
    model: str = "social"
    epochs: int = 60
    learning_rate: float = 3e-3
    batch_size: int = 64
    optimizer: str = "adam"
    history_dropout: float = 0.25
    neighbor_dropout: float = 0.5
    final_lr_fraction: float = 0.05
    weight_decay: float = 0.0
    init_scale: float = 0.5
    d_f: int = 16
    d_e: int = 16
    d_dec: int = 32
    sigma0: float = 0.5
    label: str = ""
    # seeds, one per stochastic stage
    synth_seed: int = 0
    init_seed: int = 0
    train_seed: int = 0
    loss_seed: int = 0
    permutation_seed: int = 0
    injection_seed: int = 0
    marginal_seed: int = 0

    def to_json(self) -> str:
        return json.dumps({"run_config": dataclasses.asdict(self)}, separators=(",", ":"))

    def inject_value(self) -> int | str:
        if self.inject == "match":
            return "match"
        try:
            count = int(self.inject)
        except ValueError:
            raise UsageError(f"--inject must be a non-negative integer or 'match', got {self.inject!r}") from None
        if count < 0:
            raise UsageError(f"--inject must be a non-negative integer or 'match', got {self.inject!r}")
        return count

    def loss_kind(self) -> LossKind:
        return LossKind(Loss(self.loss), self.num_samples, self.loss_seed)

    def settings(self) -> AttributionSettings:
        return AttributionSettings(
            method=self.method, loss=self.loss_kind(), num_permutations=self.num_permutations,
            replacements=self.replacements, exact_cap=self.exact_cap, inject=self.inject_value(),
            seed=self.permutation_seed, injection_seed=self.injection_seed, marginal_seed=self.marginal_seed,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(self.num_scenes, self.agents_per_scene, self.steps, self.dt, self.goal_gain,
                           self.repulsion_gain, self.radius, self.noise_std, self.synth_seed)

    def hyper(self) -> TrainHyper:
        return TrainHyper(self.learning_rate, self.epochs, self.batch_size, self.train_seed, 5.0, self.optimizer,
                          self.history_dropout, self.neighbor_dropout, self.weight_decay, self.final_lr_fraction)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_CHOICES = {
    "loss": [k.value for k in Loss],
    "method": ["exact", "permutation", "marginal"],
    "model": ["social", ConstantVelocityPredictor.kind],
    "optimizer": ["sgd", "adam"],
}

# required paths, existing inputs, and the output per subcommand
_COMMANDS = {
    "synth": ((), (), "corpus directory"),
    "train": (("manifest",), ("manifest",), "checkpoint file"),
    "eval": (("manifest", "checkpoint"), ("manifest", "checkpoint"), "CSV file"),
    "attribute": (("manifest", "checkpoint"), ("manifest", "checkpoint"), "JSONL file"),
    "robustness": (("manifest", "checkpoint"), ("manifest", "checkpoint"), "JSONL file"),
    "aggregate": (("attributions",), ("attributions",), "report JSON file"),
    "compare": (("report_a", "report_b"), ("report_a", "report_b"), "CSV file"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print usage and exit 2
        raise UsageError(message)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Shapley attribution of trajectory-prediction performance.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, _, out_kind) in _COMMANDS.items():
        p = sub.add_parser(name, help=f"writes a {out_kind}")
        p.add_argument("--config", help="JSON file with RunConfig fields")
        p.add_argument("--workers", type=int, default=1, help="parallel processes (does not change results)")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            kind = f.type if isinstance(f.type, str) else f.type.__name__
            if "bool" in kind:
                conv = _bool
            elif "int" in kind and f.name != "inject":
                conv = int
            elif "float" in kind:
                conv = float
            else:
                conv = str
            p.add_argument(flag, dest=f.name, type=conv, default=None, choices=_CHOICES.get(f.name))
    return parser


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: {path!r} is not valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise UsageError("--config: top level must be a JSON object")
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise UsageError(f"--config: unknown field {unknown[0]!r}")
    for key, value in doc.items():
        if key in _CHOICES and value not in _CHOICES[key]:
            raise UsageError(f"--config: {key} must be one of {_CHOICES[key]}, got {value!r}")
    for key, value in doc.items():
        kind = _FIELDS[key].type
        if value is None and "None" in kind:
            continue
        ok = {"bool": isinstance(value, bool), "int": isinstance(value, int) and not isinstance(value, bool),
              "float": isinstance(value, (int, float)) and not isinstance(value, bool),
              "str": isinstance(value, str)}[kind.split(" ")[0]]
        if key == "inject":
            ok = isinstance(value, (int, str)) and not isinstance(value, bool)
        if not ok:
            raise UsageError(f"--config: {key} has the wrong type ({type(value).__name__})")
    if "inject" in doc:
        doc["inject"] = str(doc["inject"])
    return doc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dataclasses.asdict(RunConfig())
    if args.config:
        values.update(_load_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    if args.command == "robustness" and values["inject"] in ("0", 0):
        values["inject"] = "match"
    cfg = RunConfig(**values)
    cfg.inject_value()
    required, inputs, _ = _COMMANDS[args.command]
    for name in required + ("out",):
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")
    for name in inputs:
        if not os.path.exists(getattr(cfg, name)):
            raise UsageError(f"--{name.replace('_', '-')}: no such file {getattr(cfg, name)!r}")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if args.command == "robustness" and cfg.inject_value() == 0:
        raise UsageError("--inject must be positive for robustness")
    try:
        cfg.settings()
        cfg.synth_config()
        if cfg.h < 1 or cfg.horizon < 1 or cfg.stride < 1:
            raise ValueError("h, horizon and stride must be >= 1")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


# --------------------------------------------------------------------------- subcommands


def _dataset(cfg: RunConfig) -> Dataset:
    dataset = load_manifest(cfg.manifest)
    if cfg.n_max is not None and cfg.n_max != dataset.n_max:
        dataset = Dataset(tuple(s.padded(cfg.n_max) for s in dataset.scenes), cfg.n_max, dataset.source)
    return dataset


def _model(cfg: RunConfig):
    model = load_checkpoint(cfg.checkpoint)
    if (model.h, model.horizon) != (cfg.h, cfg.horizon):
        raise TrajShapleyError(f"checkpoint expects h={model.h}, horizon={model.horizon}; "
                               f"config has h={cfg.h}, horizon={cfg.horizon}")
    return model


def _write_text(path: str, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_synth(cfg: RunConfig, workers: int) -> str:
    dataset, labels = generate_dataset(cfg.synth_config(), cfg.interactive, workers)
    write_dataset(dataset, cfg.out)
    write_labels(labels, os.path.join(cfg.out, "labels.json"))
    return f"wrote {len(dataset)} scenes to {cfg.out}"


def cmd_train(cfg: RunConfig, workers: int) -> str:
    dataset = _dataset(cfg)
    dt = dataset.scenes[0].dt if dataset.scenes else None
    if cfg.model == ConstantVelocityPredictor.kind:
        save_checkpoint(ConstantVelocityPredictor(cfg.h, cfg.horizon, cfg.radius, cfg.sigma0), cfg.out, dt=dt)
        return f"wrote constant-velocity checkpoint to {cfg.out}"
    queries = enumerate_queries(dataset, cfg.h, cfg.horizon, cfg.stride)
    if not queries:
        raise TrajShapleyError("no complete prediction windows in the training corpus")
    params = ModelParams.init(Dims(cfg.h, cfg.horizon, cfg.d_f, cfg.d_e, cfg.d_dec), cfg.init_seed, cfg.init_scale)
    history: list[float] = []
    params = train(params, build_batch(dataset, queries, cfg.radius), cfg.hyper(), history)
    save_checkpoint(SocialPredictor(params, cfg.radius), cfg.out, cfg.hyper(), dt)
    return f"trained on {len(queries)} queries; final NLL {history[-1]!r}; wrote {cfg.out}"


def cmd_eval(cfg: RunConfig, workers: int) -> str:
    dataset, model = _dataset(cfg), _model(cfg)
    queries = enumerate_queries(dataset, cfg.h, cfg.horizon, cfg.stride)
    if not queries:
        raise TrajShapleyError("no complete prediction windows to evaluate")
    losses = [LossKind(k, cfg.num_samples, cfg.loss_seed) for k in Loss]
    text = diff_table_csv(interaction_diff_table(model, dataset, queries, losses))
    _write_text(cfg.out, text)
    return text.rstrip("\n")


def cmd_attribute(cfg: RunConfig, workers: int) -> str:
    dataset, model = _dataset(cfg), _model(cfg)
    settings = cfg.settings()
    queries = enumerate_queries(dataset, cfg.h, cfg.horizon, cfg.stride)
    locals_ = attribute_all(model, dataset, queries, settings, workers)
    _write_text(cfg.out, "".join(json.dumps(a.to_json(), separators=(",", ":")) + "\n" for a in locals_))
    return f"wrote {len(locals_)} attributions to {cfg.out}"


def _read_attributions(path: str) -> list[LocalAttribution]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(LocalAttribution.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TrajShapleyError(f"{path}:{number}: bad attribution record ({exc})") from None
    return out


def cmd_aggregate(cfg: RunConfig, workers: int) -> str:
    report = aggregate(_read_attributions(cfg.attributions), cfg.label)
    text = report_json(report)
    _write_text(cfg.out, text)
    if cfg.svg:
        _write_text(cfg.svg, bar_chart_svg([report]))
    return text.rstrip("\n")


def _read_report(path: str) -> GlobalReport:
    try:
        with open(path, encoding="utf-8") as fh:
            return GlobalReport.from_json(json.load(fh))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise TrajShapleyError(f"{path}: bad report ({exc})") from None


def cmd_compare(cfg: RunConfig, workers: int) -> str:
    a, b = _read_report(cfg.report_a), _read_report(cfg.report_b)
    text = comparison_csv(compare_reports(a, b), a.label or "a", b.label or "b")
    _write_text(cfg.out, text)
    if cfg.svg:
        _write_text(cfg.svg, bar_chart_svg([a, b]))
    return text.rstrip("\n")


_HANDLERS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "attribute": cmd_attribute,
    "robustness": cmd_attribute,
    "aggregate": cmd_aggregate,
    "compare": cmd_compare,
}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"missing subcommand (one of {', '.join(_COMMANDS)})")
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=stderr)
        return 1
    print(cfg.to_json(), file=stdout)
    try:
        summary = _HANDLERS[args.command](cfg, args.workers)
    except (TrajShapleyError, ValueError, KeyError, OSError) as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {exc}", file=stderr)
        return 2
    print(summary, file=stdout)
    return 0


def main() -> None:
    sys.exit(run())
