""" Plain-text tables for evaluation reports. """
from typing import Sequence

import pandas as pd

from .evaluation import BINS, ErrorExample, EvalReport, MetricSummary


def _fmt(value: float|None) -> str:
    return '-' if value is None else f'{value:.3f}'


def _table(df: pd.DataFrame) -> str:
    return df.to_string(index=False) + '\n'


def metrics_table(reports: dict[str, EvalReport]) -> str:
    ks = sorted({k for r in reports.values() for k in r.precision_at})
    rows = []
    for method, r in reports.items():
        row = {'Method': method, 'Accuracy': _fmt(r.accuracy), 'Macro-F1': _fmt(r.macro_f1)}
        for k in ks:
            row[f'P@{k}'] = _fmt(r.precision_at.get(k))
        rows.append(row)
    return _table(pd.DataFrame(rows))


def bins_table(reports: dict[str, EvalReport]) -> str|None:
    rows = []
    for method, r in reports.items():
        if not r.per_bin:
            continue
        row = {'Method': method}
        for b in BINS:
            m = r.per_bin.get(b)
            row[b.capitalize()] = _fmt(m.accuracy if m else None)
        row['Drop'] = '-' if r.relative_drop is None else f'{r.relative_drop:.1%}'
        rows.append(row)
    return _table(pd.DataFrame(rows)) if rows else None


def confusion_table(report: EvalReport) -> str|None:
    if not report.confusion_pairs:
        return None
    df = pd.DataFrame([{
        'True': p.true_label,
        'Predicted': p.predicted_label,
        'Count': p.count,
        'Same region': 'yes' if p.same_region else 'no',
    } for p in report.confusion_pairs])
    return _table(df) + f'Region match rate: {_fmt(report.region_match_rate)}\n'


def region_table(reports: dict[str, EvalReport]) -> str|None:
    rows = [{
        'Method': method,
        'Nat. correct': _fmt(r.region_decomposition.nat_correct),
        'Nat. wrong, region correct': _fmt(r.region_decomposition.nat_wrong_region_correct),
        'Both wrong': _fmt(r.region_decomposition.nat_wrong_region_wrong),
        'Region accuracy': _fmt(r.region_decomposition.region_accuracy),
    } for method, r in reports.items() if r.region_decomposition]
    return _table(pd.DataFrame(rows)) if rows else None


def render_report(report: EvalReport) -> str:
    """ Every table that applies to a single report. """
    named = {report.method or 'namerecall': report}
    sections = [
        metrics_table(named),
        bins_table(named),
        confusion_table(report),
        region_table(named),
        f'Samples: {report.samples}  Fallback rate: {_fmt(report.fallback_rate)}  '
        f'Mean calls: {report.mean_calls:.2f}  Config: {report.config_fingerprint or "-"}\n',
    ]
    return '\n'.join(s for s in sections if s)


def ablation_table(reports: dict[str, EvalReport], delta: dict[str, float|None]) -> str:
    df = pd.DataFrame([{
        'Configuration': name,
        'Accuracy': _fmt(r.accuracy),
        'Macro-F1': _fmt(r.macro_f1),
        'ΔAcc': '-' if delta.get(name) is None else f'{delta[name]:+.3f}',
        'Calls/name': f'{r.mean_calls:.2f}',
    } for name, r in reports.items()])
    return _table(df)


def average_table(summary: dict[str, MetricSummary]) -> str:
    runs = max((s.runs for s in summary.values()), default=0)
    df = pd.DataFrame([{'Metric': metric, f'Mean ± std ({runs} runs)': f'{s.mean:.3f} ± {s.std:.3f}'}
                       for metric, s in summary.items()])
    return _table(df)


def errors_tsv(examples: Sequence[ErrorExample]) -> str:
    df = pd.DataFrame([e._asdict() for e in examples], columns=list(ErrorExample._fields))
    df['region_match'] = df['region_match'].map({True: 'yes', False: 'no'})
    return df.to_csv(sep='\t', index=False)
