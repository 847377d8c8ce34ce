"""Write evaluation and protocol reports: JSON, CSV and PNG figures."""

import os

from . import plotting
from .evalkit import (
    INPUT_LABELS,
    LANGUAGE_COLUMNS,
    MODE_SETS,
    REPORT_COLUMNS,
    csv_text,
    json_text,
    report_rows,
    roc_curve,
)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _stem(path):
    root, ext = os.path.splitext(path)
    return root if ext.lower() == ".json" else path


def write_eval_report(path, report, scored, ablation, train_set="", eval_set="", model="Proposed",
                      figures=True):
    """Write ``path`` (JSON) plus ``<stem>.csv``, ``<stem>_languages.csv`` and
    ``<stem>_roc.png``. Returns the list of written paths."""
    stem = _stem(path)
    base = [model, INPUT_LABELS[ablation], train_set, eval_set]
    agg = base + [f"{report.acc:.6f}", f"{report.eer:.6f}", f"{report.f1:.6f}", f"{report.auc:.6f}"]
    langs = [base + [lang] + ["" if q[k] is None else f"{q[k]:.6f}" for k in ("acc", "eer", "f1", "auc")]
             for lang, q in report.per_language.items()]
    doc = {"model": model, "input": INPUT_LABELS[ablation], "ablation": ablation,
           "train_set": train_set, "eval_set": eval_set, "metrics": report.to_dict()}
    written = [
        _write(path, json_text(doc)),
        _write(stem + ".csv", csv_text(REPORT_COLUMNS, [agg])),
        _write(stem + "_languages.csv", csv_text(LANGUAGE_COLUMNS, langs)),
    ]
    if figures:
        fpr, tpr = roc_curve(scored.scores, scored.labels)
        written.append(plotting.roc_figure({INPUT_LABELS[ablation]: (fpr, tpr, report.auc)},
                                           stem + "_roc.png", title=f"ROC ({eval_set or 'eval'})"))
    return written


def write_protocol_report(out_dir, results, model="Proposed", figures=True, meta=None):
    """``results`` is a list of :class:`~hatealign.evalkit.CellResult` in
    mode order. Writes protocol.csv (one row per cell x ablation),
    protocol_languages.csv, protocol.json and figures."""
    os.makedirs(out_dir, exist_ok=True)
    rows, lang_rows, doc_cells = [], [], []
    for res in results:
        train_set, eval_set = MODE_SETS[res.mode]
        cell = {"mode": res.mode, "train_set": f"Set-{train_set}", "eval_set": f"Set-{eval_set}",
                "pretrain_loss": res.pretrain_trace, "finetune": res.finetune_traces,
                "fingerprint": res.bundle.fingerprint(), "ablations": {}}
        for ablation, report in res.reports.items():
            agg, langs = report_rows(res.mode, ablation, report, model)
            rows.append(agg)
            lang_rows.extend(langs)
            cell["ablations"][ablation] = report.to_dict()
        doc_cells.append(cell)
    written = [
        _write(os.path.join(out_dir, "protocol.csv"), csv_text(REPORT_COLUMNS, rows)),
        _write(os.path.join(out_dir, "protocol_languages.csv"), csv_text(LANGUAGE_COLUMNS, lang_rows)),
        _write(os.path.join(out_dir, "protocol.json"), json_text({"meta": meta or {}, "cells": doc_cells})),
    ]
    if figures:
        dict_rows = [dict(zip(REPORT_COLUMNS, r)) for r in rows]
        written.append(plotting.protocol_figure(dict_rows, os.path.join(out_dir, "protocol.png")))
        for res in results:
            curves = {}
            for ablation, sc in res.scored.items():
                fpr, tpr = roc_curve(sc.scores, sc.labels)
                curves[INPUT_LABELS[ablation]] = (fpr, tpr, res.reports[ablation].auc)
            written.append(plotting.roc_figure(curves, os.path.join(out_dir, f"roc_{res.mode}.png"),
                                               title=res.mode))
            written.append(plotting.loss_figure(res.pretrain_trace, res.finetune_traces,
                                                os.path.join(out_dir, f"losses_{res.mode}.png"),
                                                title=res.mode))
    return written
