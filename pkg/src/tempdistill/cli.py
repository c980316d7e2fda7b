"""Command-line entry points.

Settings come from built-in defaults, then ``--config`` (flat ``key = value``
file), then explicit flags; later sources win.  Every output lands in
``--out`` under a fixed file name.  Failures print one line
``error: <category>: <message>`` to stderr and exit 1; usage errors exit 2.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable

from . import bounds, evaluator
from .data import (
    DataError,
    Dataset,
    _fmt,
    load_csv_dataset,
    load_teacher_logits,
    parse_bool,
    parse_config,
    parse_int_list,
    read_checkpoint,
    save_checkpoint,
    save_csv_dataset,
    save_teacher_logits,
    spiral_splits,
)
from .gradcheck import REL_TOL, gradcheck_all_modes
from .losses import LOSS_MODES, LossWeights
from .mlp import TeacherModel
from .snn import SnnNetwork
from .trainer import TeacherConfig, TrainConfig, TrainingError, train_student, train_teacher, write_losses_csv

log = logging.getLogger("tempdistill")


class CheckFailed(RuntimeError):
    """A verification command ran but its criterion did not hold."""


def _choice(options):
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s
    return conv


def _path(s: str) -> str:
    return s


@dataclass(frozen=True)
class Key:
    conv: Callable[[str], Any]
    help: str


TRAIN_KEYS = {
    "epochs": Key(int, "student training epochs"),
    "batch_size": Key(int, "student minibatch size"),
    "lr0": Key(float, "initial learning rate (cosine annealed)"),
    "momentum": Key(float, "SGD momentum"),
    "weight_decay": Key(float, "L2 decay on weights (biases exempt)"),
    "T": Key(int, "timesteps unrolled during training"),
    "alpha": Key(float, "teacher KL weight"),
    "beta": Key(float, "self-distillation weight"),
    "tau": Key(float, "softmax temperature"),
    "loss_mode": Key(_choice(LOSS_MODES), "training objective"),
    "hidden": Key(parse_int_list, "hidden LIF layer widths, comma separated"),
    "detach_ensemble": Key(parse_bool, "treat the ensemble target as constant"),
    "decay": Key(float, "membrane decay"),
    "threshold": Key(float, "firing threshold"),
    "surrogate_slope": Key(float, "sigmoid surrogate slope"),
}
TEACHER_KEYS = {
    "teacher_epochs": Key(int, "teacher training epochs"),
    "teacher_batch_size": Key(int, "teacher minibatch size"),
    "teacher_lr0": Key(float, "teacher initial learning rate"),
    "teacher_momentum": Key(float, "teacher SGD momentum"),
    "teacher_weight_decay": Key(float, "teacher weight decay"),
    "teacher_hidden": Key(parse_int_list, "teacher hidden widths"),
}
DATA_KEYS = {
    "data_classes": Key(int, "spiral classes"),
    "data_train_per_class": Key(int, "spiral training points per class"),
    "data_test_per_class": Key(int, "spiral test points per class"),
    "data_noise": Key(float, "spiral angular noise"),
    "data_seed": Key(int, "spiral seed (defaults to --seed)"),
    "train_csv": Key(_path, "training CSV instead of the spiral"),
    "test_csv": Key(_path, "test CSV instead of the spiral"),
}
SOURCE_KEYS = {
    "teacher_ckpt": Key(_path, "use this teacher checkpoint"),
    "teacher_logits": Key(_path, "use precomputed teacher logits (sample_id,z1..zn)"),
}
SCHEMA = {"seed": Key(int, "run seed"), **TRAIN_KEYS, **TEACHER_KEYS, **DATA_KEYS, **SOURCE_KEYS}
DATA_DEFAULTS = {"data_classes": 3, "data_train_per_class": 200, "data_test_per_class": 100,
                 "data_noise": 0.2}


def _add_keys(p: argparse.ArgumentParser, keys: dict[str, Key]) -> None:
    for name, key in keys.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=key.conv, default=None,
                       help=key.help)


def _settings(args, allowed: dict[str, Key]) -> dict[str, Any]:
    """Merge config file and flags; only keys in ``allowed`` are accepted."""
    out: dict[str, Any] = {}
    if args.config:
        schema = {k: SCHEMA[k].conv for k in allowed}
        out.update(parse_config(args.config, schema))
    for k in allowed:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    out.setdefault("seed", 0)
    return out


def _train_config(s: dict[str, Any]) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in s.items() if k in names})


def _teacher_config(s: dict[str, Any]) -> TeacherConfig:
    kw = {k[len("teacher_"):]: v for k, v in s.items()
          if k in TEACHER_KEYS}
    return TeacherConfig(seed=s["seed"], **kw)


def _datasets(s: dict[str, Any]) -> tuple[Dataset, Dataset]:
    if "train_csv" in s:
        train = load_csv_dataset(s["train_csv"])
        n = train.n_classes
        test = load_csv_dataset(s["test_csv"], n_classes=n, split="test") if "test_csv" in s \
            else Dataset(train.features[:0], train.labels[:0], n, "test")
        if test.n_features != train.n_features and len(test):
            raise DataError("train and test CSVs differ in feature count")
        if len(test) and test.n_classes > n:
            train.n_classes = test.n_classes
        return train, test
    d = {**DATA_DEFAULTS, **s}
    return spiral_splits(d["data_classes"], d["data_train_per_class"], d["data_test_per_class"],
                         d["data_noise"], s.get("data_seed", s["seed"]))


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_snn(path) -> tuple[SnnNetwork, dict[str, str]]:
    ck = read_checkpoint(path)
    if not isinstance(ck.model, SnnNetwork):
        raise DataError(f"{path}: expected a spiking network checkpoint")
    return ck.model, ck.meta


def _horizon(args, meta) -> int:
    if args.T is not None:
        return args.T
    if "trained_T" in meta:
        return int(meta["trained_T"])
    raise DataError("checkpoint has no trained_T; pass --T")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], **DATA_KEYS})
    train, test = _datasets(s)
    out = _out(args)
    save_csv_dataset(train, out / "train.csv")
    save_csv_dataset(test, out / "test.csv")
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


def cmd_train_teacher(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], **TEACHER_KEYS, **DATA_KEYS})
    cfg = _teacher_config(s)
    train, test = _datasets(s)
    out = _out(args)
    teacher, acc = train_teacher(train, cfg, test if len(test) else None)
    save_checkpoint(teacher, {"seed": cfg.seed, "epochs": cfg.epochs, "accuracy": acc},
                    out / "teacher.ckpt")
    save_teacher_logits(out / "teacher_logits.csv", teacher.logits(train.features))
    print(f"teacher accuracy {acc:.4f}")


def _teacher_for(s, train, test) -> TeacherModel | Any:
    if "teacher_ckpt" in s and "teacher_logits" in s:
        raise ValueError("give at most one of teacher_ckpt and teacher_logits")
    if "teacher_ckpt" in s:
        model = read_checkpoint(s["teacher_ckpt"]).model
        if not isinstance(model, TeacherModel):
            raise DataError(f"{s['teacher_ckpt']}: expected a teacher checkpoint")
        return model
    if "teacher_logits" in s:
        return load_teacher_logits(s["teacher_logits"], train.n_classes, range(len(train)))
    teacher, acc = train_teacher(train, _teacher_config(s), test if len(test) else None)
    log.info("teacher accuracy %.4f", acc)
    return teacher


def cmd_train(args) -> None:
    s = _settings(args, SCHEMA)
    cfg = _train_config(s)
    _teacher_config(s)
    train, test = _datasets(s)
    teacher = _teacher_for(s, train, test)
    out = _out(args)
    result = train_student(train, teacher, cfg, test if len(test) else None)
    save_checkpoint(result.net, result.meta(), out / "model.ckpt")
    write_losses_csv(result.log, out / "losses.csv")
    last = result.log[-1] if result.log else None
    if last is not None:
        print(f"epoch {last.epoch}: final loss {last.losses.final:.4f}, "
              f"train acc {last.train_acc:.4f}, test acc {last.test_acc:.4f}")


def cmd_eval_sweep(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], **DATA_KEYS})
    net, meta = _load_snn(args.model)
    T = _horizon(args, meta)
    data = _eval_split(args, s)
    out = _out(args)
    sweep = evaluator.full_range_sweep(net, data, T)
    evaluator.write_sweep_csv([sweep], out / "sweep.csv")
    evaluator.write_firing_rates_csv(evaluator.firing_rate_stats(net, data, T),
                                     out / "firing_rates.csv")
    print(" ".join(f"T{k}={a:.4f}" for k, a in sweep.accuracy.items()))


def _eval_split(args, s) -> Dataset:
    train, test = _datasets(s)
    return train if args.split == "train" else test


def cmd_early_exit(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], **DATA_KEYS})
    thresholds = [float(v) for v in args.cs.split(",")]
    for cs in thresholds:
        if not 0.0 < cs <= 1.0:
            raise ValueError(f"confidence threshold {cs} outside (0, 1]")
    net, meta = _load_snn(args.model)
    T = _horizon(args, meta)
    data = _eval_split(args, s)
    out = _out(args)
    res = evaluator.early_exit_grid(net, data, thresholds, T)
    evaluator.write_early_exit_csv(res, out / "early_exit.csv")
    for r in res:
        print(f"cs={r.cs_threshold:g} acc={r.accuracy:.4f} T_avg={r.avg_timesteps:.3f}")


def cmd_dump_logits(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], **DATA_KEYS})
    net, meta = _load_snn(args.model)
    T = _horizon(args, meta)
    data = _eval_split(args, s)
    out = _out(args)
    evaluator.dump_logits(net, data, T, out / "logits.csv")
    print(f"wrote logits for {len(data)} samples")


def cmd_verify_bounds(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"], "alpha": SCHEMA["alpha"], **DATA_KEYS})
    if args.trials < 1:
        raise ValueError("--trials must be positive")
    taus = [float(v) for v in args.taus.split(",")]
    out = _out(args)
    report = bounds.random_trials(args.trials, s["seed"], alpha=s.get("alpha", 0.2), taus=taus)
    report.write_csv(out / "bounds.csv")
    text = report.to_text()
    if args.model:
        net, meta = _load_snn(args.model)
        w = LossWeights(float(meta.get("alpha", 0.2)), float(meta.get("beta", 0.5)),
                        float(meta.get("tau", 4.0)))
        data = _eval_split(args, s)
        live = bounds.verify_on_model(net, data, w, args.model_trials, _horizon(args, meta))
        live.write_csv(out / "bounds_model.csv")
        text += "\nlive model outputs\n" + live.to_text()
        report_ok = report.passed and live.passed
    else:
        report_ok = report.passed
    (out / "bounds.txt").write_text(text)
    print(text, end="")
    if not report_ok:
        raise CheckFailed("a certified inequality was violated beyond tolerance")


def cmd_gradcheck(args) -> None:
    s = _settings(args, {"seed": SCHEMA["seed"]})
    sizes = parse_int_list(args.sizes)
    out = _out(args)
    results = gradcheck_all_modes(s["seed"], sizes=sizes, T=args.T)
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["loss_mode", "n_params", "max_rel_error", "passed"])
        for r in results:
            w.writerow([r.mode, r.n_params, _fmt(r.max_rel_error), str(r.passed).lower()])
            print(f"{r.mode:17s} params={r.n_params} max_rel_error={r.max_rel_error:.3e}")
    if not all(r.passed for r in results):
        raise CheckFailed(f"gradient error above {REL_TOL:g}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempdistill",
                                     description="Temporal-wise distillation of spiking MLPs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name, fn, help):
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
        p.add_argument("--config", default=None, help="flat key = value settings file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.set_defaults(func=fn)
        return p

    def model_flags(p):
        p.add_argument("--model", required=True, help="student checkpoint")
        p.add_argument("--T", type=int, default=None, help="horizon (default: trained_T)")
        p.add_argument("--split", choices=("train", "test"), default="test")

    p = command("gen-data", cmd_gen_data, "write train.csv and test.csv")
    _add_keys(p, DATA_KEYS)

    p = command("train-teacher", cmd_train_teacher, "train the ANN teacher")
    _add_keys(p, {**TEACHER_KEYS, **DATA_KEYS})

    p = command("train", cmd_train, "distill a spiking student")
    _add_keys(p, {**TRAIN_KEYS, **TEACHER_KEYS, **DATA_KEYS, **SOURCE_KEYS})

    p = command("eval-sweep", cmd_eval_sweep, "accuracy at every prefix length, firing rates")
    model_flags(p)
    _add_keys(p, DATA_KEYS)

    p = command("early-exit", cmd_early_exit, "confidence-threshold early exit")
    model_flags(p)
    p.add_argument("--cs", default="0.7,0.8,0.9,0.99,0.999", help="comma-separated thresholds")
    _add_keys(p, DATA_KEYS)

    p = command("dump-logits", cmd_dump_logits, "write per-timestep logits")
    model_flags(p)
    _add_keys(p, DATA_KEYS)

    p = command("verify-bounds", cmd_verify_bounds, "certify the upper-bound inequalities")
    p.add_argument("--trials", type=int, default=1000, help="random trials")
    p.add_argument("--taus", default="1,2,4", help="temperatures sampled per trial")
    p.add_argument("--alpha", type=float, default=None, help="teacher KL weight (default 0.2)")
    p.add_argument("--model", default=None, help="also check live outputs of this checkpoint")
    p.add_argument("--model-trials", type=int, default=100, help="samples for the live check")
    p.add_argument("--T", type=int, default=None, help="horizon for the live check")
    p.add_argument("--split", choices=("train", "test"), default="test")
    _add_keys(p, DATA_KEYS)

    p = command("gradcheck", cmd_gradcheck, "finite-difference check of BPTT gradients")
    p.add_argument("--sizes", default="2,8,8,4", help="layer sizes of the checked network")
    p.add_argument("--T", type=int, default=3, help="timesteps")
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, CheckFailed):
        return "check-failed"
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return "io"
    if isinstance(exc, DataError):
        return "data"
    if isinstance(exc, TrainingError):
        return "training"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, ValueError):
        return "config"
    return "internal"


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one error line
        msg = str(exc).replace("\n", " ")
        print(f"error: {_category(exc)}: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())
