"""
Experiment configuration read from JSON or YAML, validated with pydantic
"""
import json
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .anisotropy import Anisotropy, make_config
from .errors import AnisocapError, ConfigError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SurfaceSource(_Section):
    kind: Literal["wulff", "closed", "plane", "file"] = "wulff"
    path: Optional[str] = None
    resolution: int = Field(default=8, ge=1)
    radius: float = Field(default=1.0, gt=0.0)
    perturbation: float = Field(default=0.0, ge=0.0)


class SpectrumParams(_Section):
    k: int = Field(default=6, ge=1)
    mode: Literal["weak", "strong"] = "weak"
    band_constant: float = Field(default=1.5, gt=0.0)


class IdentityParams(_Section):
    patch: Literal["sphere", "wulff", "bump"] = "sphere"
    order: Literal[2, 4, 6] = 4
    grid: int = Field(default=200, ge=16)


class BernsteinParams(_Section):
    radii: List[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    cutoff: Optional[List[float]] = None
    r_core: float = Field(default=2.0, gt=0.0)
    n_core: int = Field(default=16, ge=2)
    r_max: float = Field(default=64.0, gt=0.0)


class ExperimentConfig(_Section):
    aniso: Union[str, dict] = "iso"
    omega0: float = 0.0
    sphere_samples: int = Field(default=4000, ge=1000)
    surface: SurfaceSource = Field(default_factory=SurfaceSource)
    resolutions: List[int] = Field(default_factory=list)
    seed: int = 0
    # cache of the luigi resolution ladder
    output_dir: str = "anisocap_ladder"
    spectrum: SpectrumParams = Field(default_factory=SpectrumParams)
    identities: IdentityParams = Field(default_factory=IdentityParams)
    flow: dict = Field(default_factory=dict)
    bernstein: BernsteinParams = Field(default_factory=BernsteinParams)

    @field_validator("aniso")
    @classmethod
    def _check_aniso(cls, v):
        try:
            _parse_aniso(v)
        except AnisocapError as ex:
            raise ValueError(str(ex)) from ex
        return v

    def anisotropy(self):
        return _parse_aniso(self.aniso)

    def half_space(self):
        return make_config(self.anisotropy(), self.omega0, sphere_samples=self.sphere_samples)


def _parse_aniso(v):
    if isinstance(v, str):
        return Anisotropy.parse(v)
    return Anisotropy.from_dict(v)


def read_config_file(filepath):
    """
    Raw dictionary from a JSON or YAML file. Raises `OSError` when the file
    cannot be read and `ConfigError` when it cannot be parsed
    """
    filepath = Path(filepath)
    text = filepath.read_text()
    try:
        if filepath.suffix in (".yaml", ".yml"):
            d = yaml.safe_load(text)
        else:
            d = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as ex:
        raise ConfigError(f"could not parse {filepath}: {ex}") from ex
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError(f"{filepath} does not hold a mapping")
    return d


def _merge(base, overrides):
    merged = dict(base)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = _merge(merged[k], v)
        else:
            merged[k] = v
    return merged


def build_config(file_values=None, overrides=None):
    """
    Merge values from a config file with command-line overrides and validate
    the result
    """
    d = _merge(file_values or {}, overrides or {})
    try:
        return ExperimentConfig.model_validate(d)
    except ValidationError as ex:
        raise ConfigError(str(ex)) from ex


def schema():
    return ExperimentConfig.model_json_schema()
