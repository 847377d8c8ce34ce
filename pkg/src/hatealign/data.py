"""Synthetic paired audio/text feature corpus, JSON-lines manifests and the
per-language split / language-set selection protocol."""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ManifestParseError, ValidationError
from .tensorcore import derive_seed, make_rng

LANGUAGES = ("en", "hi", "mr", "ta", "te", "bn")
SPLITS = ("train", "test")
MANIFEST_FIELDS = ("id", "language", "label", "split", "audio_features", "text_features", "meta")
OPTIONAL_FIELDS = {"meta"}


@dataclass(frozen=True)
class SampleRecord:
    id: str
    language: str
    label: int
    split: str
    audio_features: tuple
    text_features: tuple
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LanguageSets:
    set_a: tuple = ("mr", "bn", "ta")
    set_b: tuple = ("en", "hi", "te")

    def __post_init__(self):
        object.__setattr__(self, "set_a", tuple(self.set_a))
        object.__setattr__(self, "set_b", tuple(self.set_b))
        overlap = set(self.set_a) & set(self.set_b)
        if overlap:
            raise ValidationError(f"language sets overlap on {sorted(overlap)}")

    def get(self, which):
        if which not in ("A", "B"):
            raise ValidationError(f"language set must be 'A' or 'B', got {which!r}")
        return self.set_a if which == "A" else self.set_b


@dataclass(frozen=True)
class GeneratorConfig:
    latent_dim: int = 8
    d_a: int = 24
    d_t: int = 20
    languages: tuple = LANGUAGES
    per_language_counts: dict = None
    class_separation: float = 3.0
    language_perturbation: float = 1.0
    observation_noise: float = 0.3
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "languages", tuple(self.languages))
        counts = self.per_language_counts
        if counts is None:
            counts = {lang: (400, 400) for lang in self.languages}
        counts = {str(k): (int(v[0]), int(v[1])) for k, v in counts.items()}
        object.__setattr__(self, "per_language_counts", counts)
        for name in ("latent_dim", "d_a", "d_t"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        missing = set(self.languages) - set(counts)
        extra = set(counts) - set(self.languages)
        if missing or extra:
            raise ConfigError(f"per_language_counts must cover exactly the languages list "
                              f"(missing {sorted(missing)}, extra {sorted(extra)})")
        for lang, (h, nh) in counts.items():
            if not lang or lang != lang.lower():
                raise ConfigError(f"language tags must be non-empty lowercase, got {lang!r}")
            if h < 0 or nh < 0:
                raise ConfigError(f"per_language_counts[{lang}] must be non-negative")
        if not self.class_separation > 0:
            raise ConfigError("class_separation must be > 0")
        if self.language_perturbation < 0:
            raise ConfigError("language_perturbation must be >= 0")
        if self.observation_noise < 0:
            raise ConfigError("observation_noise must be >= 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")


def generate_corpus(cfg):
    """Draw paired features from a shared latent class model.

    z = y * delta * u + eps; audio = (A + s*E_lang) z + noise, text likewise
    with (T + s*F_lang). Mixing matrices depend only on the seed (and the
    language tag for E/F); latent draws follow the order of ``cfg.languages``.
    Records come back already split with ``cfg.train_fraction``.
    """
    k = cfg.latent_dim
    mix_rng = make_rng(derive_seed(cfg.seed, "mixing"))
    u = mix_rng.standard_normal(k)
    u /= np.linalg.norm(u)
    audio_mix = mix_rng.standard_normal((cfg.d_a, k)) / math.sqrt(k)
    text_mix = mix_rng.standard_normal((cfg.d_t, k)) / math.sqrt(k)
    latent_rng = make_rng(derive_seed(cfg.seed, "latent"))
    noise_rng = make_rng(derive_seed(cfg.seed, "noise"))

    records = []
    for lang in cfg.languages:
        lang_rng = make_rng(derive_seed(cfg.seed, f"language:{lang}"))
        a_l = audio_mix + cfg.language_perturbation * lang_rng.standard_normal((cfg.d_a, k)) / math.sqrt(k)
        t_l = text_mix + cfg.language_perturbation * lang_rng.standard_normal((cfg.d_t, k)) / math.sqrt(k)
        n_hate, n_non = cfg.per_language_counts[lang]
        labels = np.array([1] * n_hate + [0] * n_non)
        z = labels[:, None] * cfg.class_separation * u + latent_rng.standard_normal((labels.size, k))
        audio = z @ a_l.T + cfg.observation_noise * noise_rng.standard_normal((labels.size, cfg.d_a))
        text = z @ t_l.T + cfg.observation_noise * noise_rng.standard_normal((labels.size, cfg.d_t))
        for i, y in enumerate(labels):
            records.append(SampleRecord(
                id=f"{lang}-{i:05d}",
                language=lang,
                label=int(y),
                split="train",
                audio_features=tuple(float(v) for v in audio[i]),
                text_features=tuple(float(v) for v in text[i]),
                meta={"sample_rate_hz": 16000},
            ))
    return split_by_ratio(records, cfg.train_fraction, derive_seed(cfg.seed, "split"))


def round_half_up(x):
    return int(math.floor(x + 0.5))


def split_by_ratio(records, train_fraction, seed):
    """Stratified split: each (language, label) cell sends round_half_up(f*n)
    shuffled members to train and the rest to test."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    rng = make_rng(seed)
    cells = {}
    for i, r in enumerate(records):
        cells.setdefault((r.language, r.label), []).append(i)
    split = {}
    for key in sorted(cells):
        members = np.array(cells[key])
        rng.shuffle(members)
        n_train = round_half_up(train_fraction * members.size)
        for j, idx in enumerate(members):
            split[int(idx)] = "train" if j < n_train else "test"
    return [replace(r, split=split[i]) for i, r in enumerate(records)]


def select_language_set(records, sets, which, split=None):
    """Records whose language belongs to set ``which`` ('A' or 'B').

    ``split`` may be 'train', 'test' or None (both).
    """
    langs = sets.get(which)
    known = set(LANGUAGES) | {r.language for r in records}
    unknown = [lang for lang in sets.set_a + sets.set_b if lang not in known]
    if unknown:
        raise ValidationError(f"unknown language tags in language sets: {unknown}")
    if split is not None and split not in SPLITS:
        raise ValidationError(f"split must be one of {SPLITS}, got {split!r}")
    return [r for r in records if r.language in langs and (split is None or r.split == split)]


def stack(records):
    """Batch arrays ``(audio, text, labels, languages)`` for a record list."""
    audio = np.array([r.audio_features for r in records], dtype=np.float64)
    text = np.array([r.text_features for r in records], dtype=np.float64)
    labels = np.array([r.label for r in records], dtype=np.int64)
    languages = np.array([r.language for r in records], dtype=object)
    return audio, text, labels, languages


def count_table(records):
    """{language: (hate, non_hate)} in first-seen order."""
    table = {}
    for r in records:
        h, nh = table.get(r.language, (0, 0))
        table[r.language] = (h + r.label, nh + 1 - r.label)
    return table


def _floats(values):
    return "[" + ", ".join(format(v, ".17g") for v in values) + "]"


def record_to_line(r):
    parts = [
        f'"id": {json.dumps(r.id)}',
        f'"language": {json.dumps(r.language)}',
        f'"label": {r.label}',
        f'"split": {json.dumps(r.split)}',
        f'"audio_features": {_floats(r.audio_features)}',
        f'"text_features": {_floats(r.text_features)}',
    ]
    if r.meta:
        parts.append(f'"meta": {json.dumps(r.meta, sort_keys=True)}')
    return "{" + ", ".join(parts) + "}"


def write_manifest(records, path):
    for r in records:
        _validate_record(r)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(record_to_line(r) + "\n")


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def _validate_record(r, dims=None):
    if not isinstance(r.id, str) or not r.id:
        raise ValidationError(f"record id must be a non-empty string, got {r.id!r}")
    if not isinstance(r.language, str) or not r.language or r.language != r.language.lower():
        raise ValidationError(f"{r.id}: language must be a non-empty lowercase tag")
    if isinstance(r.label, bool) or r.label not in (0, 1):
        raise ValidationError(f"{r.id}: label must be 0 or 1, got {r.label!r}")
    if r.split not in SPLITS:
        raise ValidationError(f"{r.id}: split must be one of {SPLITS}, got {r.split!r}")
    if not isinstance(r.meta, dict):
        raise ValidationError(f"{r.id}: meta must be an object")
    for name in ("audio_features", "text_features"):
        values = getattr(r, name)
        if len(values) == 0 or not all(math.isfinite(v) for v in values):
            raise ValidationError(f"{r.id}: {name} must be a non-empty finite vector")
    if dims is not None and (len(r.audio_features), len(r.text_features)) != dims:
        raise ValidationError(
            f"{r.id}: feature dims ({len(r.audio_features)}, {len(r.text_features)}) "
            f"differ from corpus dims {dims}"
        )


def load_manifest(path):
    records = []
    dims = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_constant=_reject_constant)
            except ValueError as exc:
                raise ManifestParseError(str(exc), lineno) from None
            if not isinstance(obj, dict):
                raise ManifestParseError("record must be a JSON object", lineno)
            unknown = set(obj) - set(MANIFEST_FIELDS)
            missing = set(MANIFEST_FIELDS) - OPTIONAL_FIELDS - set(obj)
            if unknown or missing:
                raise ValidationError(
                    f"line {lineno}: unknown fields {sorted(unknown)}, missing fields {sorted(missing)}"
                )
            try:
                audio = tuple(float(v) for v in obj["audio_features"])
                text = tuple(float(v) for v in obj["text_features"])
            except (TypeError, ValueError):
                raise ValidationError(f"line {lineno}: feature vectors must be arrays of numbers") from None
            r = SampleRecord(obj["id"], obj["language"], obj["label"], obj["split"],
                             audio, text, obj.get("meta", {}))
            if dims is None:
                dims = (len(audio), len(text))
            _validate_record(r, dims)
            records.append(replace(r, label=int(r.label)))
    return records
