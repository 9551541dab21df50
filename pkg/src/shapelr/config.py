"""Flat ``section.key = value`` configuration files."""
from __future__ import annotations

import numpy as np

from .harness import ExperimentConfig, parse_feature_sets
from .synth import SyntheticSpec


class ConfigError(ValueError):
    pass


EXPERIMENT_KEYS = {
    "input", "output", "mode", "seed", "feature_sets", "mad_threshold", "calibration",
    "q", "pca_fit", "subtract_within", "filter",
}
SYNTH_KEYS = {
    "k", "m", "n", "seed", "between_cov", "within_cov", "size_mode", "landmark_noise",
    "rotation_sd", "translation_sd", "scale_sd", "n_vowels", "vowel_sd",
}


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        allowed = {"experiment": EXPERIMENT_KEYS, "synth": SYNTH_KEYS}.get(section)
        if allowed is None or name not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_matrix(text: str) -> np.ndarray:
    """``"4,0;0,1"`` (rows split by ';') or ``"diag(4,1)"``."""
    s = text.strip().replace(" ", "")
    try:
        if s.startswith("diag(") and s.endswith(")"):
            return np.diag([float(v) for v in s[5:-1].split(",")])
        rows = [[float(v) for v in r.split(",")] for r in s.split(";") if r]
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}: {exc}") from None
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged matrix {text!r}")
    return np.array(rows)


def experiment_config(cfg: dict) -> ExperimentConfig:
    g = lambda k, d=None: cfg.get(f"experiment.{k}", d)  # noqa: E731
    kwargs = {}
    try:
        if g("mode") is not None:
            kwargs["mode"] = g("mode")
        if g("seed") is not None:
            kwargs["seed"] = int(g("seed"))
        if g("feature_sets") is not None:
            kwargs["feature_sets"] = parse_feature_sets(g("feature_sets"))
        if g("mad_threshold") is not None:
            kwargs["mad_threshold"] = float(g("mad_threshold"))
        if g("calibration") is not None:
            kwargs["calibration"] = g("calibration")
        if g("q") is not None:
            kwargs["q"] = int(g("q"))
        if g("pca_fit") is not None:
            kwargs["pca_fit"] = g("pca_fit")
        if g("subtract_within") is not None:
            kwargs["subtract_within"] = _bool(g("subtract_within"))
        if g("filter") is not None:
            kwargs["apply_filter"] = _bool(g("filter"))
        return ExperimentConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def synthetic_spec(cfg: dict) -> SyntheticSpec:
    g = lambda k, d=None: cfg.get(f"synth.{k}", d)  # noqa: E731
    if g("between_cov") is None or g("within_cov") is None:
        raise ConfigError("synth.between_cov and synth.within_cov are required")
    kwargs = {"between_cov": parse_matrix(g("between_cov")), "within_cov": parse_matrix(g("within_cov"))}
    ints = ("k", "m", "n", "seed", "n_vowels")
    floats = ("landmark_noise", "rotation_sd", "translation_sd", "scale_sd", "vowel_sd")
    try:
        for key in ints:
            if g(key) is not None:
                kwargs[key] = int(g(key))
        for key in floats:
            if g(key) is not None:
                kwargs[key] = float(g(key))
        if g("size_mode") is not None:
            kwargs["size_mode"] = _bool(g("size_mode"))
        return SyntheticSpec(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def has_synth(cfg: dict) -> bool:
    return any(k.startswith("synth.") for k in cfg)
