"""Run configuration: sectioned key-value files, typed access and a stable hash."""
from __future__ import annotations

import configparser
import hashlib
import io
import json
import os

import numpy as np

from . import mat2core as mc
from .errors import ConfigError, DegenerateDistribution
from .families import (Discrete, Uniform, make_constant_family, make_rotation_family,
                       make_schrodinger_family)

SEED_ENV = "COCYCLE_LAB_SEED"


class RunConfig:
    """Raw string values by section; typed getters raise ConfigError naming the key."""

    def __init__(self, sections: dict[str, dict[str, str]]):
        self.sections = {s: dict(v) for s, v in sections.items()}

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls({s: dict(parser[s]) for s in parser.sections()})

    @classmethod
    def load(cls, path, env=None) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = cls.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        env = os.environ if env is None else env
        if env.get(SEED_ENV):
            cfg.sections.setdefault("run", {})["seed"] = env[SEED_ENV].strip()
        return cfg

    def to_text(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in sorted(self.sections):
            parser[name] = {k: self.sections[name][k] for k in sorted(self.sections[name])}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {s: dict(sorted(v.items())) for s, v in sorted(self.sections.items())}

    @property
    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.as_dict() == other.as_dict()

    # typed access

    def raw(self, section: str, key: str, default=None) -> str:
        value = self.sections.get(section, {}).get(key)
        if value is None or value == "":
            if default is None:
                raise ConfigError(f"missing required key [{section}] {key}")
            return default
        return value

    def has(self, section: str, key: str) -> bool:
        return bool(self.sections.get(section, {}).get(key, ""))

    def _convert(self, section, key, default, fn, what):
        raw = self.raw(section, key, None if default is None else str(default))
        try:
            return fn(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not {what}") from exc

    def getint(self, section: str, key: str, default=None) -> int:
        return self._convert(section, key, default, int, "an integer")

    def getfloat(self, section: str, key: str, default=None) -> float:
        return self._convert(section, key, default, float, "a number")

    def getbool(self, section: str, key: str, default=None) -> bool:
        def parse(s):
            low = s.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return self._convert(section, key, None if default is None else str(default), parse, "a boolean")

    def getfloats(self, section: str, key: str, default=None) -> list[float]:
        if default is not None and not self.has(section, key):
            return [float(v) for v in default]
        return self._convert(section, key, None, lambda s: [float(v) for v in s.split(",") if v.strip()],
                             "a comma-separated list of numbers")

    def interval(self, section: str, key: str) -> tuple[float, float]:
        vals = self.getfloats(section, key)
        if len(vals) != 2 or not vals[1] > vals[0]:
            raise ConfigError(f"[{section}] {key} must be two increasing numbers")
        return vals[0], vals[1]

    @property
    def seed(self) -> int:
        return self.getint("run", "seed")


def _matrix(cfg: RunConfig, key: str) -> np.ndarray:
    vals = cfg.getfloats("family", key)
    if len(vals) != 4:
        raise ConfigError(f"[family] {key} needs four entries a, b, c, d")
    M = np.array(vals).reshape(2, 2)
    if abs(mc.det(M) - 1.0) > 1e-9:
        raise ConfigError(f"[family] {key} must have determinant 1")
    return M


def build_distribution(cfg: RunConfig):
    kind = cfg.raw("family", "distribution", "discrete")
    try:
        if kind == "discrete":
            support = cfg.getfloats("family", "support")
            weights = cfg.getfloats("family", "weights", [1.0] * len(support))
            return Discrete(tuple(support), tuple(weights))
        if kind == "uniform":
            return Uniform(cfg.getfloat("family", "lo"), cfg.getfloat("family", "hi"))
    except ValueError as exc:
        raise ConfigError(f"[family] distribution: {exc}") from exc
    raise ConfigError(f"[family] distribution = {kind!r} is not discrete or uniform")


def build_family(cfg: RunConfig, J=None):
    kind = cfg.raw("family", "kind")
    J = cfg.interval("family", "J") if J is None else J
    if kind == "schrodinger":
        try:
            return make_schrodinger_family(build_distribution(cfg), J,
                                           allow_degenerate=cfg.getbool("family", "allow_degenerate", False))
        except DegenerateDistribution as exc:
            raise ConfigError(f"{exc}; set [family] allow_degenerate = true to run it anyway") from exc
    if kind == "rotation":
        p = cfg.getfloat("family", "p", 0.5)
        if not 0 < p < 1:
            raise ConfigError("[family] p must lie in (0, 1)")
        return make_rotation_family(_matrix(cfg, "A"), _matrix(cfg, "B"), p, J)
    if kind == "constant":
        return make_constant_family(_matrix(cfg, "matrix"), J)
    raise ConfigError(f"[family] kind = {kind!r} is not schrodinger, rotation or constant")
