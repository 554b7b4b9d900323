"""JSON run configuration: schema validation, defaults, variants and presets."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .experiments import UNIFORM_RANDOM, VERTICAL, LineConfig, MonteCarloSpec, UwbBaselineSpec
from .geometry import ArraySpec, Orientation
from .link_budget import OXYGEN_L0_60GHZ, PathLossModel, RadioConfig
from .scenario import AGENT, GeophoneNode, Scenario, build_line_scenario
from .waveform import PulseSpec

SECTIONS = ("scenario", "radio", "path_loss", "orientation", "monte_carlo")

DEFAULTS: dict[str, dict[str, Any]] = {
    "scenario": {"G": 160, "W": 4, "delta_m": 25.0, "r_max_m": 25.0, "agent_elements": 25, "height_m": 0.15},
    "radio": {"f_c_hz": 60e9, "bandwidth_hz": 2.16e9, "rolloff": 0.6, "tx_power_dbm": 20.0,
              "noise_figure_db": 4.0, "system_temp_k": 300.0},
    "path_loss": {"kind": "free_space", "L0": OXYGEN_L0_60GHZ, "reflection_coefficient": -1.0},
    "orientation": {"mode": VERTICAL},
    "monte_carlo": {"n_trials": 1000, "height_range_m": [0.1, 0.2], "chunk_size": 100},
}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(problems))
        self.problems = problems


def _schema() -> dict:
    return json.loads(resources.files("linpeb").joinpath("config.schema.json").read_text())


def preset_names() -> list[str]:
    root = resources.files("linpeb").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(resources.files("linpeb").joinpath("presets", f"{name}.json").read_text())


def _describe(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        unknown = sorted(set(err.instance) - allowed)
        return f"unknown key(s) at {where}: {', '.join(unknown)}"
    return f"{where}: {err.message}"


def validate(raw: dict) -> dict:
    """Schema-check a raw config and return it; raises :class:`ConfigError` listing all problems."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([_describe(e) for e in errors])
    return raw


def load_config(path: str | Path) -> dict:
    """Read a config file; a run manifest is accepted and its recorded config reused."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(raw, dict) and "manifest_version" in raw:
        raw = raw.get("config")
    return validate(raw)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class Variant:
    """One curve: fully resolved sections plus derived objects."""

    label: str
    sections: dict

    @property
    def radio(self) -> RadioConfig:
        r = self.sections["radio"]
        return RadioConfig(f_c=r["f_c_hz"], tx_power_dbm=r["tx_power_dbm"], noise_figure_db=r["noise_figure_db"],
                           system_temp_k=r["system_temp_k"], pulse=PulseSpec(r["bandwidth_hz"], r["rolloff"]))

    @property
    def path_loss(self) -> PathLossModel:
        p = self.sections["path_loss"]
        return PathLossModel(p["kind"], p["L0"], p["reflection_coefficient"])

    @property
    def orientation_mode(self) -> str:
        return self.sections["orientation"]["mode"]

    def fixed_orientation(self) -> Orientation:
        o = self.sections["orientation"]
        if o["mode"] == VERTICAL:
            return Orientation.vertical()
        if o["mode"] != "fixed":
            raise ConfigError("a random orientation has no single fixed value")
        scale = math.pi / 180.0 if o.get("unit") == "deg" else 1.0
        return Orientation(o.get("varphi", 0.0) * scale, o.get("vartheta", 0.0) * scale, o.get("Phi", 0.0) * scale)

    @property
    def randomised(self) -> bool:
        """Whether the curve needs Monte Carlo averaging."""
        return self.orientation_mode == UNIFORM_RANDOM or self.path_loss.two_ray

    def monte_carlo(self, seed: int, n_trials: int | None = None) -> MonteCarloSpec:
        m = self.sections["monte_carlo"]
        mode = UNIFORM_RANDOM if self.orientation_mode == UNIFORM_RANDOM else VERTICAL
        if self.orientation_mode == "fixed":
            raise ConfigError("Monte Carlo runs need orientation mode 'vertical' or 'uniform_random'")
        return MonteCarloSpec(n_trials=n_trials or m["n_trials"], seed=seed, orientation_mode=mode,
                              height_range=tuple(m["height_range_m"]), chunk_size=m["chunk_size"])

    def _check_line(self):
        s = self.sections["scenario"]
        ratio = s["r_max_m"] / s["delta_m"]
        if ratio < 1.0 - 1e-12:
            raise ConfigError("scenario.r_max_m must be at least scenario.delta_m")
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("scenario.r_max_m must be an integer multiple of scenario.delta_m")

    def line(self) -> LineConfig:
        self._check_line()
        s = self.sections["scenario"]
        return LineConfig(W=s["W"], delta=s["delta_m"], r_max=s["r_max_m"], agent_elements=s["agent_elements"],
                          anchor_elements=s.get("anchor_elements"), radio=self.radio, path_loss=self.path_loss)

    def scenario(self) -> Scenario:
        s = self.sections["scenario"]
        if "nodes" in s:
            return self._explicit_scenario()
        self._check_line()
        orient = None if self.orientation_mode == UNIFORM_RANDOM else self.fixed_orientation()
        try:
            return build_line_scenario(
                s["G"], s["W"], s["delta_m"], s["r_max_m"], self.radio, self.path_loss,
                agent_elements=s["agent_elements"], anchor_elements=s.get("anchor_elements"),
                spacing=s.get("element_spacing_m"), orientations=orient, heights=s["height_m"],
                slots=s.get("anchor_slots"))
        except ValueError as exc:
            raise ConfigError(f"infeasible scenario: {exc}") from None

    def _explicit_scenario(self) -> Scenario:
        s = self.sections["scenario"]
        if self.randomised:
            raise ConfigError("explicit node lists support deterministic runs only")
        entries = sorted(enumerate(s["nodes"]), key=lambda e: e[1]["x_m"])
        n_agents = sum(1 for _, e in entries if e["role"] == AGENT)
        radio = self.radio
        spacing = s.get("element_spacing_m", radio.wavelength / 2.0)
        orient = self.fixed_orientation()
        nodes, next_agent, next_anchor = [], 1, n_agents + 1
        for slot, (_, e) in enumerate(entries):
            if e["role"] == AGENT:
                idx, next_agent = next_agent, next_agent + 1
                n_el = e.get("n_elements", s["agent_elements"])
            else:
                idx, next_anchor = next_anchor, next_anchor + 1
                n_el = e.get("n_elements", s.get("anchor_elements", s["agent_elements"]))
            nodes.append(GeophoneNode(idx, e["role"], (e["x_m"], 0.0, 0.0), ArraySpec.upa(n_el, spacing), orient,
                                      e.get("height_m", s["height_m"]), slot))
        try:
            return Scenario(tuple(nodes), s["delta_m"], s["r_max_m"], radio, self.path_loss)
        except ValueError as exc:
            raise ConfigError(f"infeasible scenario: {exc}") from None

    def uwb_specs(self, uwb: dict) -> list[UwbBaselineSpec]:
        r = self.sections["radio"]
        return [UwbBaselineSpec(f_c=uwb.get("f_c_hz", 4e9), tx_power_dbm=uwb.get("tx_power_dbm", -8.0),
                                n_elements=n, bandwidth=uwb.get("bandwidth_hz", r["bandwidth_hz"]),
                                rolloff=r["rolloff"])
                for n in uwb.get("n_elements", [1, 25])]


def resolve(raw: dict) -> list[Variant]:
    """Apply defaults and expand ``variants`` into resolved curves."""
    base = {k: _merge(DEFAULTS[k], raw.get(k, {})) for k in SECTIONS}
    variants = raw.get("variants") or [{"label": raw.get("name", "run")}]
    out = []
    labels = set()
    for v in variants:
        if v["label"] in labels:
            raise ConfigError(f"duplicate variant label {v['label']!r}")
        labels.add(v["label"])
        sections = {k: _merge(base[k], v.get(k, {})) for k in SECTIONS}
        m = sections["monte_carlo"]["height_range_m"]
        if m[0] > m[1]:
            raise ConfigError(f"variant {v['label']}: height_range_m must be increasing")
        out.append(Variant(v["label"], sections))
    return out
