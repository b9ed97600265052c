"""Plain ``key=value`` configuration files.

Layout::

    # comment
    [problem]
    r = 0.125
    solver_n = 1024

    [signal]
    kind = brownian
    params.n_modes = 64

Keys may also be written fully dotted (``problem.r = 0.125``) outside any
section.  Sections are ``signal``, ``coeff``, ``problem`` and ``study``; free
``params.*`` keys are allowed under ``signal`` and ``coeff``.  Every error
carries the line number of the offending key.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .path_algebra import Grid, OffGridError
from .signals import KINDS, SignalSpec
from .solver import ProblemSpec

SECTIONS = ("signal", "coeff", "problem", "study")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _float_list(s: str) -> tuple:
    parts = [p for p in s.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _int_list(s: str) -> tuple:
    return tuple(int(p) for p in s.replace(" ", "").split(",") if p)


# key -> (parser, default)
SCHEMA: dict[str, tuple[Any, Any]] = {
    "signal.kind": (str, "brownian"),
    "signal.dim": (int, 1),
    "signal.T": (float, 1.0),
    "signal.fine_n": (int, 8192),
    "signal.seed": (int, 42),
    "signal.r_max": (float, 0.0),
    "coeff.name": (str, "tanh_diag"),
    "coeff.lambda": (float, 0.9),
    "problem.beta": (float, 0.4),
    "problem.epsilon": (float, 0.02),
    "problem.T": (float, 1.0),
    "problem.r": (float, 0.125),
    "problem.r0": (float, 0.25),
    "problem.solver_n": (int, 1024),
    "problem.fine_factor": (int, 8),
    "problem.eta0": (float, 0.5),
    "problem.eta_slope": (float, 0.0),
    "problem.K": (float, 1.0),
    "problem.ito_correction": (_bool, True),
    "study.r_list": (_float_list, (0.25, 0.125, 0.0625, 0.03125, 0.015625)),
    "study.seeds": (_int_list, ()),
    "study.n_seeds": (int, 1),
    "study.record_runtime": (_bool, True),
    "study.exact_tol": (float, 1e-12),
}

FREE_PREFIXES = ("signal.params.", "coeff.params.")


def _param_value(s: str):
    """Free parameter values: number, comma list, ``;``-separated nested list, or string."""
    s = s.strip()
    if ";" in s:
        return tuple(_float_list(part) for part in s.split(";") if part.strip())
    if "," in s:
        try:
            return _float_list(s)
        except ValueError:
            return s
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(_fmt(x) for x in v)
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class Config:
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)  # key -> line number (None for defaults)

    def __getitem__(self, key: str):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def params(self, section: str) -> dict:
        prefix = f"{section}.params."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def line_of(self, key: str) -> Optional[int]:
        return self.lines.get(key)

    # ------------------------------------------------------------------
    def set(self, key: str, raw: str, line: Optional[int] = None) -> None:
        if key.startswith(FREE_PREFIXES) and len(key) > len("coeff.params."):
            self.values[key] = _param_value(raw)
            self.lines[key] = line
            return
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", line)
        parser = SCHEMA[key][0]
        try:
            val = parser(raw.strip())
        except ValueError:
            raise ConfigError(f"type mismatch for {key}: {raw.strip()!r}", line) from None
        self.values[key] = val
        self.lines[key] = line

    # ------------------------------------------------------------------
    def problem_spec(self) -> ProblemSpec:
        sig = SignalSpec(
            kind=self["signal.kind"],
            dim=self["signal.dim"],
            T=self["problem.T"],
            fine_n=self["problem.solver_n"] * self["problem.fine_factor"],
            seed=self["signal.seed"],
            r_max=self["problem.r0"],
            params=self.params("signal"),
        )
        return ProblemSpec(
            signal=sig,
            coeff_name=self["coeff.name"],
            coeff_params=tuple(sorted(self.params("coeff").items())),
            beta=self["problem.beta"],
            epsilon=self["problem.epsilon"],
            lam=self["coeff.lambda"],
            T=self["problem.T"],
            r=self["problem.r"],
            r0=self["problem.r0"],
            solver_n=self["problem.solver_n"],
            fine_factor=self["problem.fine_factor"],
            eta0=self["problem.eta0"],
            eta_slope=self["problem.eta_slope"],
            K=self["problem.K"],
            ito_correction=self["problem.ito_correction"],
        )

    def signal_spec(self) -> SignalSpec:
        """Standalone signal description used by ``gen``."""
        return SignalSpec(
            kind=self["signal.kind"],
            dim=self["signal.dim"],
            T=self["signal.T"],
            fine_n=self["signal.fine_n"],
            seed=self["signal.seed"],
            r_max=self["signal.r_max"],
            params=self.params("signal"),
        )

    def seeds(self) -> tuple:
        if self["study.seeds"]:
            return tuple(self["study.seeds"])
        base = self["signal.seed"]
        return tuple(base + i for i in range(self["study.n_seeds"]))

    def validate(self) -> None:
        """Cross-key checks; raises :class:`ConfigError` pointing at the responsible line."""
        if self["signal.kind"] not in KINDS:
            raise ConfigError(f"unknown signal kind {self['signal.kind']!r}", self.line_of("signal.kind"))
        for key in ("signal.dim", "problem.solver_n", "problem.fine_factor", "signal.fine_n", "study.n_seeds"):
            if self[key] < 1:
                raise ConfigError(f"{key} must be >= 1", self.line_of(key))
        for key in ("problem.T", "signal.T"):
            if self[key] <= 0:
                raise ConfigError(f"{key} must be positive", self.line_of(key))
        T, n = self["problem.T"], self["problem.solver_n"]
        probe = Grid(0.0, T / n, 1)

        def on_grid(key, r, line):
            try:
                probe.steps_for(r)
            except OffGridError:
                raise ConfigError(f"r not a grid multiple: {key}={r} with h={T}/{n}", line) from None

        r_line = self.line_of("problem.r") or self.line_of("problem.solver_n") or self.line_of("problem.T")
        if self["problem.r"] < 0:
            raise ConfigError("problem.r must be >= 0", r_line)
        on_grid("problem.r", self["problem.r"], r_line)
        r0_line = self.line_of("problem.r0") or self.line_of("problem.solver_n")
        on_grid("problem.r0", self["problem.r0"], r0_line)
        if self["problem.r"] > self["problem.r0"]:
            raise ConfigError("problem.r exceeds problem.r0", r_line)
        rl_line = self.line_of("study.r_list") or self.line_of("problem.solver_n")
        rl = self["study.r_list"]
        if any(r <= 0 for r in rl) or any(b >= a for a, b in zip(rl, rl[1:])):
            raise ConfigError("study.r_list must be positive and strictly decreasing", rl_line)
        for r in rl:
            on_grid("study.r_list", r, rl_line)
        if max(rl) > self["problem.r0"]:
            raise ConfigError("study.r_list exceeds problem.r0", rl_line)
        try:
            self.problem_spec().exps
        except ValueError as exc:
            raise ConfigError(str(exc), self.line_of("problem.beta")) from None
        try:
            self.problem_spec().coeff()
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc), self.line_of("coeff.name")) from None


def parse_config(text: str, overrides=(), validate: bool = True) -> Config:
    """Parse config text, then apply ``key=value`` overrides (reported as lines after the file)."""
    cfg = Config()
    section = None
    n_lines = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        n_lines = lineno
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or line[1:-1].strip() not in SECTIONS:
                raise ConfigError(f"unknown section {line!r}", lineno)
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}", lineno)
        key, val = (p.strip() for p in line.split("=", 1))
        cfg.set(_qualify(key, section, lineno), val, lineno)
    for i, item in enumerate(overrides, start=1):
        if "=" not in item:
            raise ConfigError(f"override must be key=value: {item!r}", n_lines + i)
        key, val = (p.strip() for p in item.split("=", 1))
        cfg.set(_qualify(key, None, n_lines + i), val, n_lines + i)
    if validate:
        cfg.validate()
    return cfg


def _qualify(key: str, section: Optional[str], lineno: int) -> str:
    head = key.split(".", 1)[0]
    if head in SECTIONS:
        return key
    if section is None:
        raise ConfigError(f"key {key!r} outside a section must be dotted", lineno)
    return f"{section}.{key}"


def serialize(cfg: Config) -> str:
    """Canonical form: explicit keys only, grouped by section, sorted."""
    out = []
    for sec in SECTIONS:
        keys = sorted(k for k in cfg.values if k.startswith(sec + "."))
        if not keys:
            continue
        if out:
            out.append("")
        out.append(f"[{sec}]")
        for k in keys:
            out.append(f"{k[len(sec) + 1:]} = {_fmt(cfg.values[k])}")
    return "\n".join(out) + ("\n" if out else "")
