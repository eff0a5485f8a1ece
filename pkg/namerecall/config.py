""" Run configuration.

    A run is configured by one YAML file plus command-line overrides:

        M: 4
        K: 5
        granularity: nationality     # or region14, continent6
        region_mode: native_prompt   # or mapped_from_nationality
        ablation: full               # preset name, or a mapping of drop_* flags
        seed: 42
        concurrency_limit: 8
        cache_path: cache/responses.jsonl
        mock_kb_path: null           # set to run offline against a mock knowledge base
        taxonomy_path: null          # null selects the shipped taxonomy
        reprompt_on_unparseable: true
        backend:
          base_url: https://api.openai.com/v1
          api_key_env: OPENAI_API_KEY
          model_id: gpt-4.1-mini
          timeout: 60
          max_retries: 3
          backoff: 1.0

    The API key itself is only ever read from the environment variable named
    by `backend.api_key_env`.
"""
from dataclasses import dataclass, field, fields, replace
import logging
from typing import Any

import yaml

from .backend import BackendConfig
from .errors import ConfigError
from .prediction import ABLATIONS, Ablation, PredictConfig, RegionMode, parse_ablation
from .recall_agents import DEFAULT_M
from .taxonomy import Granularity
from .utils import read_lines


@dataclass(frozen=True)
class RunConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    m: int = DEFAULT_M
    k: int|None = None
    granularity: Granularity = Granularity.NATIONALITY
    region_mode: RegionMode = RegionMode.NATIVE_PROMPT
    ablation: Ablation = field(default_factory=Ablation)
    seed: int = 42
    concurrency_limit: int = 8
    cache_path: str|None = None
    mock_kb_path: str|None = None
    taxonomy_path: str|None = None
    reprompt_on_unparseable: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f'M must be >= 1, got {self.m}')
        if self.k is not None and self.k < 1:
            raise ConfigError(f'K must be >= 1, got {self.k}')
        if self.concurrency_limit < 1:
            raise ConfigError(f'concurrency_limit must be >= 1, got {self.concurrency_limit}')

    @property
    def resolved_k(self) -> int:
        return self.k if self.k is not None else self.granularity.default_k

    def predict_config(self, ablation: Ablation|None = None) -> PredictConfig:
        return PredictConfig(self.m, self.resolved_k, self.granularity, self.region_mode,
                             ablation or self.ablation, self.reprompt_on_unparseable)


# YAML keys that differ from the field names.
_ALIASES = {'M': 'm', 'K': 'k'}


def _ablation(value: Any) -> Ablation:
    if isinstance(value, Ablation):
        return value
    if isinstance(value, str):
        return parse_ablation(value)
    if isinstance(value, dict):
        names = {f.name for f in fields(Ablation)}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f'Unknown ablation flags: {", ".join(sorted(unknown))}')
        return Ablation(**{k: bool(v) for k, v in value.items()})
    raise ConfigError(f'ablation must be one of {", ".join(ABLATIONS)} or a mapping of flags')


def _backend(value: Any, base: BackendConfig) -> BackendConfig:
    if value is None:
        return base
    if not isinstance(value, dict):
        raise ConfigError('backend must be a mapping')
    names = {f.name for f in fields(BackendConfig)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f'Unknown backend settings: {", ".join(sorted(unknown))}')
    try:
        return replace(base, **value)
    except TypeError as e:
        raise ConfigError(f'Invalid backend settings: {e}')


def _coerce(name: str, value: Any) -> Any:
    try:
        if name == 'granularity':
            return Granularity.parse(value)
        if name == 'region_mode':
            return value if isinstance(value, RegionMode) else RegionMode(str(value).lower())
        if name == 'ablation':
            return _ablation(value)
        if name in ('m', 'k', 'seed', 'concurrency_limit'):
            if isinstance(value, bool):
                raise ValueError(value)
            return int(value)
        if name == 'reprompt_on_unparseable':
            return bool(value)
        return None if value is None else str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'Invalid value for {name}: {value!r} ({e})')


def make_config(settings: dict[str, Any], base: RunConfig|None = None) -> RunConfig:
    """ Apply `settings` on top of `base`. None values leave the base value. """
    base = base or RunConfig()
    values: dict[str, Any] = {}
    backend = base.backend
    names = {f.name for f in fields(RunConfig)}
    for key, value in settings.items():
        name = _ALIASES.get(key, key)
        if name == 'backend':
            backend = _backend(value, backend)
            continue
        if name not in names:
            raise ConfigError(f'Unknown configuration key {key!r}')
        if value is None and name != 'k':
            continue
        values[name] = None if value is None else _coerce(name, value)
    return replace(base, backend=backend, **values)


def load_config(path: str|None = None, overrides: dict[str, Any]|None = None) -> RunConfig:
    """ Defaults, then the YAML file at `path`, then `overrides`. """
    config = RunConfig()
    if path:
        try:
            data = yaml.safe_load('\n'.join(read_lines(path)))
        except yaml.YAMLError as e:
            raise ConfigError(f'{path} is not valid YAML: {e}')
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f'{path}: configuration must be a mapping')
        config = make_config(data, config)
        logging.info(f'Loaded configuration from {path}')
    if overrides:
        config = make_config({k: v for k, v in overrides.items() if v is not None}, config)
    return config
