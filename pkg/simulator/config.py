"""Experiment configuration: defaults, the key = value file grammar, and validation."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from django.conf import settings

from .core import ConfigError
from .forms import ExperimentForm, parse_rate_sweep

SECTIONS = {
    "network": (
        "topology", "nodes", "lanes", "lane_ratio", "bridges", "fifo_up", "fifo_down", "side_buffer",
        "hop_latency", "global_hop_latency", "strict_chipper", "golden_epoch", "c_threshold",
        "reassembly_slots", "retransmit_in_band",
    ),
    "guarantees": (
        "injection_guarantee", "transfer_guarantee", "injection_threshold", "retry_threshold",
        "throttle_latency",
    ),
    "traffic": ("pattern", "rate", "rate_sweep", "trace_path", "packet_flits"),
    "run": ("cycles", "warmup", "seed", "sat_threshold", "throughput_window", "check_conservation"),
}

GUARANTEE_MODES = {
    "on": (True, True),
    "off": (False, False),
    "injection-only": (True, False),
    "transfer-only": (False, True),
}

RATE_KEYS = ("rate", "rate_sweep")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str = "hird"
    nodes: int = 16
    lanes: int = 1
    lane_ratio: int = 2
    bridges: int = 8
    fifo_up: int = 1
    fifo_down: int = 4
    side_buffer: int = 4
    hop_latency: int = 2
    global_hop_latency: int = 2
    strict_chipper: bool = False
    golden_epoch: int = 0
    c_threshold: int = 2
    reassembly_slots: int = 16
    retransmit_in_band: bool = False
    injection_guarantee: bool = True
    transfer_guarantee: bool = True
    injection_threshold: int = 100
    retry_threshold: int = 2
    throttle_latency: int = 1
    pattern: str = "uniform_random"
    rate: float = 0.1
    rate_sweep: str = ""
    trace_path: str = ""
    packet_flits: int = 4
    cycles: int = 100_000
    warmup: int | None = None
    seed: int = 0
    sat_threshold: int = 300
    throughput_window: int = 0
    check_conservation: bool = True

    @property
    def warmup_cycles(self):
        return self.cycles // 10 if self.warmup is None else self.warmup

    def rates(self):
        return parse_rate_sweep(self.rate_sweep) if self.rate_sweep else [self.rate]

    def with_rate(self, rate):
        return replace(self, rate=rate, rate_sweep="")

    def to_text(self, include_rate=True):
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                if key in RATE_KEYS and not include_rate:
                    continue
                lines.append(f"{key} = {format_value(getattr(self, key))}")
            lines.append("")
        return "\n".join(lines)

    def config_hash(self):
        return hashlib.sha256(self.to_text(include_rate=False).encode("utf-8")).hexdigest()[:12]


def format_value(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, float):
        return repr(value)
    return str(value)


KNOWN_KEYS = {f.name for f in fields(ExperimentConfig)} | {"guarantees"}


def parse_text(text):
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in SECTIONS:
                raise ConfigError(line, f"unknown section on line {number}.")
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}", f"expected 'key = value', got {raw!r}.")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key.")
        if key in values:
            raise ConfigError(key, "duplicate key.")
        values[key] = value
    return values


def _apply_guarantees(values):
    mode = values.pop("guarantees", None)
    if mode is None:
        return values
    if mode not in GUARANTEE_MODES:
        raise ConfigError("guarantees", f"use one of {', '.join(GUARANTEE_MODES)}.")
    injection, transfer = GUARANTEE_MODES[mode]
    values["injection_guarantee"] = format_value(injection)
    values["transfer_guarantee"] = format_value(transfer)
    return values


def parse_config(path=None, text=None, overrides=None):
    """Defaults, then the config file, then command-line overrides."""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}.") from exc
    values = _apply_guarantees(parse_text(text or ""))
    flags = {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key.")
        flags[key] = format_value(value)
    values.update(_apply_guarantees(flags))
    if "rate" in flags and "rate_sweep" not in flags:
        values["rate_sweep"] = ""
    if "seed" not in values:
        values["seed"] = str(settings.NOC_SEED or 0)

    data = {f.name: format_value(f.default) for f in fields(ExperimentConfig)}
    data.update(values)
    form = ExperimentForm(data=data)
    if not form.is_valid():
        key, errors = next(iter(form.errors.items()))
        raise ConfigError(key, " ".join(errors))
    return ExperimentConfig(**{f.name: form.cleaned_data[f.name] for f in fields(ExperimentConfig)})
