"""Run configuration: ``[section]`` headers and ``key = value`` lines.

Values are Python literals (numbers, quoted strings, lists, true/false);
a bare word is read as a string. ``--set section.key=value`` (or just
``key=value`` when the key name is unambiguous) overrides file values.
Unknown sections or keys are errors, and all problems are reported at once.
"""
from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, ShapeError
from .network import Architecture, Loss
from .optim import OPTIMIZERS, TrainConfig

# section -> key -> default (None means "no default")
SCHEMA: dict[str, dict[str, Any]] = {
    "model": {"arch": [49, 8, 8, 10]},
    "train": {
        "optimizer": "gsgd",
        "learning_rate": 0.1,
        "batch_size": 64,
        "epochs": 20,
        "seed": 0,
        "loss": Loss.CROSS_ENTROPY.value,
        "lr_schedule": [],
    },
    "data": {
        "source": "blobs",
        "seed": 0,
        "n_per_class": 100,
        "n_test_per_class": 50,
        "spread": 0.3,
        "train_images": None,
        "train_labels": None,
        "test_images": None,
        "test_labels": None,
        "downsample": 4,
    },
    "output": {"dir": "runs/default", "figures": True},
    "verify": {"icr_tolerance": None, "free_skeleton": True},
    "compare": {
        "scale": 100.0,
        "sgd_learning_rate": 0.1,
        "gsgd_learning_rate": 0.1,
    },
}

_BOOL = {"true": True, "false": False}


def parse_value(text: str) -> Any:
    text = text.strip()
    if text.lower() in _BOOL:
        return _BOOL[text.lower()]
    if text.lower() in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    if text.startswith("["):
        try:
            return ast.literal_eval(re.sub(r"\b(true|false)\b", lambda m: m.group(1).title(), text))
        except (ValueError, SyntaxError):
            pass
    return text


def parse_text(text: str, source: str = "<config>") -> tuple[dict[str, dict[str, Any]], list[str]]:
    sections: dict[str, dict[str, Any]] = {}
    problems: list[str] = []
    current = None
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            problems.append(f"{source}:{line_no}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if "." in key:
            sec, key = key.split(".", 1)
        elif current is None:
            problems.append(f"{source}:{line_no}: key {key!r} appears before any [section]")
            continue
        else:
            sec = current
        sections.setdefault(sec, {})[key] = parse_value(value)
    return sections, problems


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if ch in "\"'":
            quote = None if quote == ch else (quote or ch)
        elif ch == "#" and quote is None:
            return line[:i]
    return line


def apply_overrides(sections: dict, overrides: list[str]) -> list[str]:
    problems = []
    for item in overrides or []:
        if "=" not in item:
            problems.append(f"override {item!r} is not of the form key=value")
            continue
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            sec, name = key.split(".", 1)
        else:
            owners = [s for s, keys in SCHEMA.items() if key in keys]
            if len(owners) != 1:
                problems.append(f"override key {key!r} is {'ambiguous' if owners else 'unknown'}; use section.key")
                continue
            sec, name = owners[0], key
        sections.setdefault(sec, {})[name] = parse_value(value)
    return problems


@dataclass
class RunConfig:
    arch: Architecture
    train: TrainConfig
    data: dict[str, Any]
    output_dir: Path
    figures: bool = True
    verify: dict[str, Any] = field(default_factory=dict)
    compare: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, dict[str, Any]] = field(default_factory=dict)

    def echo(self) -> dict:
        return {sec: dict(vals) for sec, vals in self.raw.items()}


def load_config(path=None, overrides: list[str] | None = None, base_dir=None) -> RunConfig:
    """Read, merge with defaults, override, and validate a run config."""
    sections: dict[str, dict[str, Any]] = {}
    problems: list[str] = []
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        sections, problems = parse_text(path.read_text(), str(path))
        base_dir = base_dir or path.parent
    problems += apply_overrides(sections, overrides or [])
    return validate(sections, problems, Path(base_dir or "."))


def validate(sections: dict, problems: list[str] | None = None, base_dir: Path = Path(".")) -> RunConfig:
    problems = list(problems or [])
    for sec, keys in sections.items():
        if sec not in SCHEMA:
            problems.append(f"unknown section [{sec}]")
            continue
        for key in keys:
            if key not in SCHEMA[sec]:
                problems.append(f"unknown key {sec}.{key}")
    merged = {sec: {**defaults, **sections.get(sec, {})} for sec, defaults in SCHEMA.items()}

    arch = None
    try:
        arch_value = merged["model"]["arch"]
        arch = Architecture.parse(arch_value) if isinstance(arch_value, str) else Architecture(arch_value)
        if arch.L < 2:
            problems.append(f"model.arch {arch} needs at least one hidden layer")
    except (ShapeError, TypeError, ValueError) as exc:
        problems.append(f"model.arch: {exc}")

    t = merged["train"]
    if t["optimizer"] not in OPTIMIZERS:
        problems.append(f"train.optimizer must be one of {', '.join(OPTIMIZERS)}, got {t['optimizer']!r}")
    _positive(problems, "train.learning_rate", t["learning_rate"])
    _integer(problems, "train.batch_size", t["batch_size"], minimum=1)
    _integer(problems, "train.epochs", t["epochs"], minimum=0)
    _integer(problems, "train.seed", t["seed"], minimum=0)
    try:
        loss = Loss.parse(t["loss"])
    except ValueError:
        problems.append(f"train.loss must be one of {[l.value for l in Loss]}, got {t['loss']!r}")
        loss = Loss.CROSS_ENTROPY
    schedule = []
    try:
        for start, mult in t["lr_schedule"]:
            if int(start) != start or start < 1 or not float(mult) > 0:
                raise ValueError
            schedule.append((int(start), float(mult)))
    except (TypeError, ValueError):
        problems.append("train.lr_schedule must be a list of [epoch >= 1, multiplier > 0] pairs")

    d = merged["data"]
    if d["source"] not in ("blobs", "idx"):
        problems.append(f"data.source must be 'blobs' or 'idx', got {d['source']!r}")
    elif d["source"] == "idx":
        for key in ("train_images", "train_labels"):
            if not d[key]:
                problems.append(f"data.{key} is required when data.source = 'idx'")
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if d[key]:
                p = Path(d[key])
                p = p if p.is_absolute() else base_dir / p
                if not p.is_file():
                    problems.append(f"data.{key}: file not found: {p}")
                d[key] = str(p)
        if bool(d["test_images"]) != bool(d["test_labels"]):
            problems.append("data.test_images and data.test_labels must be given together")
        _integer(problems, "data.downsample", d["downsample"], minimum=0)
    else:
        _integer(problems, "data.n_per_class", d["n_per_class"], minimum=1)
        _integer(problems, "data.n_test_per_class", d["n_test_per_class"], minimum=0)
        _integer(problems, "data.seed", d["seed"], minimum=0)
        if not isinstance(d["spread"], (int, float)) or d["spread"] < 0:
            problems.append("data.spread must be a non-negative number")

    c = merged["compare"]
    for key in ("scale", "sgd_learning_rate", "gsgd_learning_rate"):
        _positive(problems, f"compare.{key}", c[key])
    v = merged["verify"]
    if v["icr_tolerance"] is not None:
        _positive(problems, "verify.icr_tolerance", v["icr_tolerance"])

    if problems:
        raise ConfigError(problems)
    train = TrainConfig(
        optimizer=t["optimizer"], learning_rate=float(t["learning_rate"]), batch_size=int(t["batch_size"]),
        epochs=int(t["epochs"]), seed=int(t["seed"]), loss=loss, lr_schedule=tuple(schedule),
        check_icr=None if v["icr_tolerance"] is None else float(v["icr_tolerance"]),
    )
    return RunConfig(arch, train, d, Path(merged["output"]["dir"]), bool(merged["output"]["figures"]),
                     v, c, merged)


def _positive(problems, name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        problems.append(f"{name} must be a positive number, got {value!r}")


def _integer(problems, name, value, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        problems.append(f"{name} must be an integer >= {minimum}, got {value!r}")
