"""Flat ``key = value`` experiment configuration with namespaced keys.

Every key has a typed default; files and ``--set`` overrides are coerced to
that type and unknown keys are rejected.  ``config_hash`` fingerprints the
fully resolved key set for provenance.
"""

from __future__ import annotations

import hashlib
from dataclasses import fields

from .channel import ChannelParams
from .errors import ConfigError
from .rxdsp import DspConfig
from .txframe import DEFAULT_CENTER_FREQUENCY, DEFAULT_SAMPLE_RATE, DEFAULT_SYMBOL_RATE

__all__ = ["DEFAULTS", "ExperimentConfig", "load_config", "parse_assignment"]

_CHANNEL_SKIP = {"seed", "chunk_samples", "loss_db_total"}

DEFAULTS = {
    "constellation.cardinality": 1024,
    "constellation.nu": "auto",
    "constellation.V_A": 5.0,
    "frame.pilot_fraction": 0.5,
    "frame.pilot_gain_db": 13.0,
    "frame.cazac_length": 1021,
    "frame.cazac_root_x": 7,
    "frame.cazac_root_y": 11,
    "frame.interleave_period": 2,
    "pulse.rolloff": 0.4,
    "pulse.span_symbols": 32,
    "tx.sample_rate": DEFAULT_SAMPLE_RATE,
    "tx.symbol_rate": DEFAULT_SYMBOL_RATE,
    "tx.center_frequency": DEFAULT_CENTER_FREQUENCY,
    "channel.loss_db_total": "none",
    "calibration.duration_samples": 0,
    "security.eps_total": 1e-8,
    "security.beta": 0.95,
    "security.eps_prep": "auto",
    "keyrate.xi_B": 0.012,
    "keyrate.N": 1.8e6,
    "keyrate.distances_km": "0:30:0.5",
    "keyrate.hold": "xi_B",
    "run.blocks": 20,
    "run.symbols_per_block": 100_000,
    "run.master_seed": 20240601,
    "run.workers": 1,
    "run.output_dir": "results",
    "run.hostile_blocks": "",
    "sweep.rolloffs": "0,0.1,0.2,0.4,0.6,0.8,1.0",
    "sweep.rolloff_lf_noise_power": 0.02,
    "sweep.V_As": "1,2,3,4,5,6,8,10",
    "sweep.cardinalities": "4,256,1024,4096",
    "sweep.snr_db": "0,3,6,10",
}
for f in fields(ChannelParams):
    if f.name not in _CHANNEL_SKIP:
        DEFAULTS[f"channel.{f.name}"] = f.default
DEFAULTS["channel.xi_B_target"] = 0.012
for f in fields(DspConfig):
    if f.name not in ("rolloff", "span_symbols", "sample_rate", "symbol_rate", "center_frequency"):
        DEFAULTS[f"dsp.{f.name}"] = f.default


def _coerce(key, raw, default):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return text


def parse_assignment(text):
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


class ExperimentConfig:
    """Resolved configuration; behaves like a read-only mapping."""

    def __init__(self, overrides=None):
        values = dict(DEFAULTS)
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown configuration key {key!r}")
            values[key] = _coerce(key, raw, DEFAULTS[key])
        self._values = values

    def __getitem__(self, key):
        return self._values[key]

    def items(self):
        return sorted(self._values.items())

    def with_overrides(self, **kv):
        merged = {k: v for k, v in self._values.items() if v != DEFAULTS[k]}
        merged.update({k.replace("__", "."): v for k, v in kv.items()})
        return ExperimentConfig(merged)

    def section(self, prefix):
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._values.items() if k.startswith(p)}

    def as_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    @property
    def config_hash(self):
        return hashlib.sha256(self.as_text().encode()).hexdigest()[:16]

    def floats(self, key):
        text = str(self[key]).strip()
        if not text:
            return []
        return [float(t) for t in text.split(",")]

    def ints(self, key):
        return [int(v) for v in self.floats(key)]

    def validate(self):
        """Build every parameter object once so bad values surface as :class:`ConfigError`."""
        try:
            self.channel_params()
            self.dsp_config()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if self["keyrate.hold"] not in ("xi_B", "xi_A"):
            raise ConfigError(f"keyrate.hold must be xi_B or xi_A, got {self['keyrate.hold']!r}")
        return self

    # builders ---------------------------------------------------------

    def channel_params(self, seed=0, **overrides):
        kw = self.section("channel")
        loss_total = kw.pop("loss_db_total")
        kw["loss_db_total"] = None if str(loss_total).lower() == "none" else float(loss_total)
        kw.update(overrides)
        return ChannelParams(seed=seed, **kw)

    def dsp_config(self, **overrides):
        kw = self.section("dsp")
        kw.update(rolloff=self["pulse.rolloff"], span_symbols=self["pulse.span_symbols"],
                  sample_rate=self["tx.sample_rate"], symbol_rate=self["tx.symbol_rate"],
                  center_frequency=self["tx.center_frequency"])
        kw.update(overrides)
        return DspConfig(**kw)


def load_config(path=None, assignments=()):
    """Read a config file (``#`` comments allowed) and apply ``key=value`` overrides."""
    overrides = {}
    if path:
        try:
            fh = open(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        with fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                try:
                    key, value = parse_assignment(line)
                except ConfigError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from None
                overrides[key] = value
    for a in assignments:
        key, value = parse_assignment(a)
        overrides[key] = value
    return ExperimentConfig(overrides)
