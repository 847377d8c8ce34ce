"""Threshold metrics, ROC/EER, ablation scoring and the language-set
protocol runner."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import encoders
from .contrastive import ContrastiveConfig, check_binary
from .data import LanguageSets, select_language_set, stack
from .downstream import DownstreamConfig, classify, fuse
from .errors import StructuralError, UndefinedMetricError, ValidationError
from .tensorcore import derive_seed
from .trainer import TrainConfig, finetune, init_bundle, pretrain

ABLATIONS = ("multimodal", "text_only", "audio_only")
INPUT_LABELS = {"multimodal": "Text + Audio", "text_only": "Text", "audio_only": "Audio"}
MODES = ("in_set_A", "in_set_B", "cross_A_to_B", "cross_B_to_A")
# mode -> (train set, eval set)
MODE_SETS = {
    "in_set_A": ("A", "A"),
    "in_set_B": ("B", "B"),
    "cross_A_to_B": ("A", "B"),
    "cross_B_to_A": ("B", "A"),
}
REPORT_COLUMNS = ("model", "input", "train_set", "eval_set", "acc", "eer", "f1", "auc")
LANGUAGE_COLUMNS = ("model", "input", "train_set", "eval_set", "language", "acc", "eer", "f1", "auc")


def _scored(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = check_binary(labels)
    if s.shape != y.shape:
        raise ValidationError(f"{s.size} scores for {y.size} labels")
    if s.size == 0:
        raise ValidationError("metrics need at least one sample")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    return s, y


def _two_class(s, y, metric):
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError(f"{metric} needs both classes, got {n_pos} positives of {y.size}")
    return n_pos, y.size - n_pos


def accuracy(scores, labels, threshold=0.5):
    s, y = _scored(scores, labels)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def f1(scores, labels, threshold=0.5):
    s, y = _scored(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def error_rates(scores, labels):
    """FAR and FRR at every unique score threshold plus +inf.

    FAR(t) = P(score >= t | y=0), FRR(t) = P(score < t | y=1); thresholds
    ascend, so FAR falls and FRR rises along the returned arrays.
    """
    s, y = _scored(scores, labels)
    n_pos, n_neg = _two_class(s, y, "error_rates")
    thresholds = np.append(np.unique(s), np.inf)
    neg = np.sort(s[y == 0])
    pos = np.sort(s[y == 1])
    far = (n_neg - np.searchsorted(neg, thresholds, side="left")) / n_neg
    frr = np.searchsorted(pos, thresholds, side="left") / n_pos
    return thresholds, far, frr


def roc_curve(scores, labels):
    """(fpr, tpr) from (0, 0) to (1, 1) with one point per unique score."""
    _, far, frr = error_rates(scores, labels)
    return far[::-1], (1.0 - frr)[::-1]


def roc_auc(scores, labels):
    """Trapezoidal area under the ROC curve (ties count one half)."""
    fpr, tpr = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def eer(scores, labels):
    """Equal error rate: FAR/FRR crossing, linearly interpolated between the
    two adjacent thresholds that bracket it."""
    _, far, frr = error_rates(scores, labels)
    d = far - frr
    exact = np.flatnonzero(d == 0)
    if exact.size:
        return float(far[exact[0]])
    k = int(np.flatnonzero(d > 0)[-1])
    lam = d[k] / (d[k] - d[k + 1])
    return float(far[k] + lam * (far[k + 1] - far[k]))


def eer_threshold(scores, labels):
    """Threshold at which max(FAR, FRR) is smallest."""
    thresholds, far, frr = error_rates(scores, labels)
    return float(thresholds[int(np.argmin(np.maximum(far, frr)))])


@dataclass
class MetricsReport:
    acc: float
    eer: float
    f1: float
    auc: float
    n_pos: int
    n_neg: int
    per_language: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _quartet(s, y):
    out = {"acc": accuracy(s, y), "f1": f1(s, y), "eer": None, "auc": None,
           "n_pos": int(y.sum()), "n_neg": int(y.size - y.sum())}
    if 0 < y.sum() < y.size:
        out["eer"] = eer(s, y)
        out["auc"] = roc_auc(s, y)
    return out


def metrics_report(scores, labels, languages=None):
    s, y = _scored(scores, labels)
    n_pos, n_neg = _two_class(s, y, "metrics_report")
    per_language = {}
    if languages is not None:
        languages = np.asarray(languages, dtype=object)
        for lang in sorted(set(languages.tolist())):
            sel = languages == lang
            per_language[lang] = _quartet(s[sel], y[sel])
    return MetricsReport(accuracy(s, y), eer(s, y), f1(s, y), roc_auc(s, y), n_pos, n_neg, per_language)


@dataclass
class ScoredSamples:
    ids: list
    scores: np.ndarray
    labels: np.ndarray
    languages: np.ndarray


def score_dataset(bundle, records, ablation="multimodal"):
    """Eval-mode hate probabilities, optionally zeroing one modality's
    embedding before fusion."""
    if ablation not in ABLATIONS:
        raise ValidationError(f"ablation must be one of {ABLATIONS}, got {ablation!r}")
    audio, text, labels, languages = stack(records)
    ids = [r.id for r in records]
    if not records:
        return ScoredSamples(ids, np.zeros(0), labels, languages)
    if audio.shape[1] != bundle.audio.config.input_dim or text.shape[1] != bundle.text.config.input_dim:
        raise StructuralError(
            f"records have dims ({audio.shape[1]}, {text.shape[1]}), model expects "
            f"({bundle.audio.config.input_dim}, {bundle.text.config.input_dim})"
        )
    ea, _ = encoders.encode_normalized(bundle.audio, audio)
    et, _ = encoders.encode_normalized(bundle.text, text)
    if ablation == "text_only":
        ea = np.zeros_like(ea)
    elif ablation == "audio_only":
        et = np.zeros_like(et)
    fused, _ = fuse(ea, et, bundle.renormalize_fused)
    probs, _ = classify(bundle.classifier, fused)
    return ScoredSamples(ids, probs, labels, languages)


@dataclass(frozen=True)
class ProtocolSpec:
    mode: str = "in_set_A"
    ablation: str = "multimodal"
    sets: LanguageSets = LanguageSets()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.ablation not in ABLATIONS:
            raise ValidationError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")


def cell_selection(corpus, mode, sets, cross_eval="test"):
    """(train records, eval records) for one protocol cell."""
    train_set, eval_set = MODE_SETS[mode]
    train = select_language_set(corpus, sets, train_set, "train")
    if train_set == eval_set or cross_eval == "test":
        evaluation = select_language_set(corpus, sets, eval_set, "test")
    elif cross_eval == "all":
        evaluation = select_language_set(corpus, sets, eval_set, None)
    else:
        raise ValidationError(f"cross_eval must be 'test' or 'all', got {cross_eval!r}")
    if not train:
        raise ValidationError(f"cell {mode}: empty training selection")
    if not evaluation:
        raise ValidationError(f"cell {mode}: empty evaluation selection")
    return train, evaluation


@dataclass
class CellResult:
    mode: str
    bundle: object
    pretrain_trace: list
    finetune_traces: dict
    scored: dict
    reports: dict


def train_cell(corpus, mode, sets, train_cfg=TrainConfig(), dcfg=DownstreamConfig(),
               ccfg=ContrastiveConfig(), cross_eval="test", log=None):
    """Pretrain + finetune on a cell's training selection (seed derived from
    the master seed and the mode name)."""
    train, evaluation = cell_selection(corpus, mode, sets, cross_eval)
    cell_cfg = TrainConfig(**{**asdict(train_cfg), "seed": derive_seed(train_cfg.seed, f"cell:{mode}")})
    a0 = train[0]
    bundle = init_bundle(len(a0.audio_features), len(a0.text_features), cell_cfg,
                         renormalize_fused=dcfg.renormalize_fused)
    bundle, p_trace = pretrain(bundle, train, cell_cfg, ccfg, log=log)
    bundle, f_traces = finetune(bundle, train, cell_cfg, dcfg, log=log)
    return bundle, p_trace, f_traces, evaluation


def run_protocol(corpus, spec, train_cfg=TrainConfig(), dcfg=DownstreamConfig(),
                 ccfg=ContrastiveConfig(), cross_eval="test", ablations=None, log=None):
    """Train one cell and score it under each requested ablation.

    Returns a :class:`CellResult`; ``ablations`` defaults to ``[spec.ablation]``.
    """
    ablations = list(ablations or [spec.ablation])
    bundle, p_trace, f_traces, evaluation = train_cell(corpus, spec.mode, spec.sets, train_cfg, dcfg,
                                                       ccfg, cross_eval, log)
    scored, reports = {}, {}
    for ab in ablations:
        sc = score_dataset(bundle, evaluation, ab)
        scored[ab] = sc
        reports[ab] = metrics_report(sc.scores, sc.labels, sc.languages)
    return CellResult(spec.mode, bundle, p_trace, f_traces, scored, reports)


def report_rows(mode, ablation, report, model="Proposed"):
    """(aggregate row, per-language rows) in the CSV column order."""
    train_set, eval_set = MODE_SETS[mode]
    base = [model, INPUT_LABELS[ablation], f"Set-{train_set}", f"Set-{eval_set}"]
    agg = base + [_fmt(report.acc), _fmt(report.eer), _fmt(report.f1), _fmt(report.auc)]
    langs = [base + [lang] + [_fmt(q[k]) for k in ("acc", "eer", "f1", "auc")]
             for lang, q in report.per_language.items()]
    return agg, langs


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def json_text(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
