"""Experiment configuration read from INI-style files.

Sections ``[system]``, ``[lead]``, ``[protocol]`` and ``[run]``; physical
keys are ``T, mu, omega_max, Gamma, epsilon, L, tau, tau_eq, Lambda_plus,
Lambda_minus``.  ``tau`` may hold a comma-separated list (erasure grid).
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path


@dataclass(frozen=True)
class SystemConfig:
    epsilon: float = 0.25


@dataclass(frozen=True)
class LeadConfig:
    T: float = 1.0
    mu: float = 0.0625
    L: int = 10
    Gamma: float = 0.125
    omega_max: float = 1.0
    Lambda_plus: float = 1.0
    Lambda_minus: float = 1.0


@dataclass(frozen=True)
class ProtocolConfig:
    kind: str = "steady"  # "steady" or "erasure"
    tau: tuple[float, ...] = (400.0,)
    tau_eq: float = 0.0
    epsilon: float = 0.8  # final splitting of the erasure drive


@dataclass(frozen=True)
class RunConfig:
    trajectories: int = 1000
    seed: int = 1
    workers: int = 1
    chunk: int = 250
    step: float = 0.5
    bins: int | str = "auto"
    emit_events: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    lead: LeadConfig = field(default_factory=LeadConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def with_run(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, run=replace(self.run, **changes))

    def with_lead(self, **changes) -> "ExperimentConfig":
        return replace(self, lead=replace(self.lead, **changes))

    def with_protocol(self, **changes) -> "ExperimentConfig":
        return replace(self, protocol=replace(self.protocol, **changes))

    def to_dict(self) -> dict:
        """Parameter echo for reports; the worker count is left out because it
        must not change any output file."""
        d = asdict(self)
        d["protocol"]["tau"] = list(self.protocol.tau)
        del d["run"]["workers"]
        return d


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _bins(text: str) -> int | str:
    text = text.strip()
    return text if text == "auto" else int(text)


_PARSERS = {
    "system": (SystemConfig, {"epsilon": float}),
    "lead": (LeadConfig, {
        "T": float, "mu": float, "L": int, "Gamma": float, "omega_max": float,
        "Lambda_plus": float, "Lambda_minus": float,
    }),
    "protocol": (ProtocolConfig, {"kind": str, "tau": _floats, "tau_eq": float, "epsilon": float}),
    "run": (RunConfig, {
        "trajectories": int, "seed": int, "workers": int, "chunk": int, "step": float,
        "bins": _bins, "emit_events": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    }),
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys such as T and Lambda_plus are case sensitive
    cp.read_string(text)
    parts = {}
    for section, (cls, parsers) in _PARSERS.items():
        kwargs = {}
        if cp.has_section(section):
            for key, raw in cp.items(section):
                if key not in parsers:
                    raise KeyError(f"unknown key '{key}' in [{section}]")
                kwargs[key] = parsers[key](raw)
        parts[section] = cls(**kwargs)
    unknown = set(cp.sections()) - set(_PARSERS)
    if unknown:
        raise KeyError(f"unknown sections: {sorted(unknown)}")
    return ExperimentConfig(**parts)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
