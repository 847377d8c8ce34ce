"""The single JSON run document consumed by every CLI command.

Layout::

    {"schema": 1, "seed": 0,
     "data": {...}, "train": {...}, "downstream": {...},
     "contrastive": {...}, "protocol": {...}}

Every section is optional. ``data.seed`` and ``train.seed`` default to seeds
derived from the master ``seed`` (see :func:`hatealign.tensorcore.derive_seed`
with names ``"data"`` and ``"train"``).
"""

import dataclasses
import json
from dataclasses import dataclass, field

from .contrastive import ContrastiveConfig
from .data import GeneratorConfig, LanguageSets
from .downstream import DownstreamConfig
from .errors import ConfigError, HateAlignError
from .evalkit import ABLATIONS, MODES
from .tensorcore import derive_seed
from .trainer import TrainConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ProtocolConfig:
    modes: tuple = MODES
    ablations: tuple = ABLATIONS
    set_a: tuple = ("mr", "bn", "ta")
    set_b: tuple = ("en", "hi", "te")
    cross_eval: str = "test"
    figures: bool = True
    model_name: str = "Proposed"

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "ablations", tuple(self.ablations))
        for m in self.modes:
            if m not in MODES:
                raise ConfigError(f"unknown mode {m!r}; choose from {MODES}")
        for a in self.ablations:
            if a not in ABLATIONS:
                raise ConfigError(f"unknown ablation {a!r}; choose from {ABLATIONS}")
        if self.cross_eval not in ("test", "all"):
            raise ConfigError("cross_eval must be 'test' or 'all'")
        LanguageSets(self.set_a, self.set_b)

    @property
    def sets(self):
        return LanguageSets(self.set_a, self.set_b)


SECTIONS = {
    "data": GeneratorConfig,
    "train": TrainConfig,
    "downstream": DownstreamConfig,
    "contrastive": ContrastiveConfig,
    "protocol": ProtocolConfig,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: GeneratorConfig = None
    train: TrainConfig = None
    downstream: DownstreamConfig = field(default_factory=DownstreamConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        if self.data is None:
            object.__setattr__(self, "data", GeneratorConfig(seed=derive_seed(self.seed, "data")))
        if self.train is None:
            object.__setattr__(self, "train", TrainConfig(seed=derive_seed(self.seed, "train")))


def _section(name, cls, values, master_seed):
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    values = dict(values)
    if "seed" in known and "seed" not in values:
        values["seed"] = derive_seed(master_seed, name)
    try:
        return cls(**values)
    except HateAlignError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: invalid value ({exc})") from None


def parse_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "schema" not in doc:
        raise ConfigError('config is missing the required "schema" field')
    if doc["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"schema must be {SCHEMA_VERSION}, got {doc['schema']!r}")
    unknown = sorted(set(doc) - set(SECTIONS) - {"schema", "seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    kwargs = {name: _section(name, cls, doc.get(name, {}), seed) for name, cls in SECTIONS.items()}
    return RunConfig(seed=seed, **kwargs)


def load_config(path):
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(doc)


def describe_defaults():
    """Text listing every config key with its default, for ``--help``."""
    lines = ['top level: "schema" (required, = 1), "seed" (master seed, default 0)']
    for name, cls in SECTIONS.items():
        lines.append(f"[{name}]")
        inst = cls()
        for f in dataclasses.fields(cls):
            default = getattr(inst, f.name)
            if f.name == "seed":
                default = f"derived from master seed ('{name}')"
            elif isinstance(default, dict):
                default = "400 hate / 400 non-hate per language"
            lines.append(f"  {f.name} = {default}")
    return "\n".join(lines)
