""" Metrics, breakdowns and evaluation reports.

    Metric functions take a sequence of `(gold, ranks)` pairs, where `ranks`
    is the predicted label list with rank 1 first.
"""
from collections import Counter
from dataclasses import dataclass, field
import json
import logging
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np
from sklearn.metrics import f1_score

from .backend import ChatBackend
from .dataset import FrequencyBins, LabeledName
from .errors import EvaluationError
from .prediction import Ablation, CallAccounting, PredictConfig, PredictionRecord, make_record, predict_many
from .taxonomy import Granularity, Taxonomy
from .utils import stable_hash


Scored = tuple[str, Sequence[str]]

BINS = ('head', 'mid', 'tail')


def default_ks(granularity: Granularity) -> tuple[int, ...]:
    return (1, 3, 5) if granularity is Granularity.NATIONALITY else (1, 2, 3)


def _check(preds: Sequence[Scored]) -> None:
    if not preds:
        raise EvaluationError('Cannot evaluate an empty prediction set')
    for gold, ranks in preds:
        if not ranks:
            raise EvaluationError(f'Empty ranking for gold label {gold!r}')


def accuracy(preds: Sequence[Scored]) -> float:
    _check(preds)
    return float(np.mean([ranks[0] == gold for gold, ranks in preds]))


def macro_f1(preds: Sequence[Scored], label_set: Iterable[str]) -> float:
    """ Unweighted mean of per-class F1 over every class in `label_set`. A
        class with no gold samples and no predictions scores 0.
    """
    labels = sorted(set(label_set))
    if not labels:
        raise EvaluationError('Macro-F1 needs a non-empty label set')
    _check(preds)
    gold = [g for g, _ in preds]
    top1 = [ranks[0] for _, ranks in preds]
    return float(f1_score(gold, top1, labels=labels, average='macro', zero_division=0))


def precision_at_k(preds: Sequence[Scored], k: int) -> float:
    if k < 1:
        raise EvaluationError(f'K must be >= 1, got {k}')
    _check(preds)
    short = [ranks for _, ranks in preds if len(ranks) < k]
    if short:
        raise EvaluationError(f'{len(short)} rankings are shorter than K={k}')
    return float(np.mean([gold in ranks[:k] for gold, ranks in preds]))


class BinMetrics(NamedTuple):
    samples: int
    accuracy: float
    macro_f1: float


class BinReport(NamedTuple):
    bins: dict[str, BinMetrics|None]
    relative_drop: float|None


def bin_stratified_eval(preds: Sequence[Scored], bins: FrequencyBins) -> BinReport:
    """ Accuracy and Macro-F1 per frequency bin of the gold label. Bins with
        no test samples are None, not zero.
    """
    grouped: dict[str, list[Scored]] = {b: [] for b in BINS}
    for gold, ranks in preds:
        which = bins.bin_of(gold)
        if which is None:
            raise EvaluationError(f'Gold label {gold!r} is not in any frequency bin')
        grouped[which].append((gold, ranks))
    result: dict[str, BinMetrics|None] = {}
    for b in BINS:
        items = grouped[b]
        result[b] = BinMetrics(len(items), accuracy(items), macro_f1(items, getattr(bins, b))) if items else None
    return BinReport(result, relative_drop(result['head'], result['tail']))


def relative_drop(head: BinMetrics|float|None, tail: BinMetrics|float|None) -> float|None:
    """ (head - tail) / head accuracy; None when either side is missing or
        head accuracy is zero.
    """
    if head is None or tail is None:
        return None
    h = head.accuracy if isinstance(head, BinMetrics) else head
    t = tail.accuracy if isinstance(tail, BinMetrics) else tail
    return None if h == 0 else (h - t) / h


class ConfusionPair(NamedTuple):
    true_label: str
    predicted_label: str
    count: int
    same_region: bool


class ConfusionSummary(NamedTuple):
    pairs: list[ConfusionPair]
    region_match_rate: float|None


def same_region(taxonomy: Taxonomy, a: str, b: str) -> bool:
    ra, rb = taxonomy.normalize(a), taxonomy.normalize(b)
    if ra is None or rb is None:
        return False
    return taxonomy.region_of(ra) == taxonomy.region_of(rb)


def confusion_pairs(preds: Sequence[Scored], taxonomy: Taxonomy, top_n: int = 10) -> ConfusionSummary:
    counts = Counter((gold, ranks[0]) for gold, ranks in preds if ranks and ranks[0] != gold)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))[:top_n]
    pairs = [ConfusionPair(g, p, c, same_region(taxonomy, g, p)) for (g, p), c in ordered]
    rate = sum(p.same_region for p in pairs) / len(pairs) if pairs else None
    return ConfusionSummary(pairs, rate)


class RegionDecomposition(NamedTuple):
    nat_correct: float
    nat_wrong_region_correct: float
    nat_wrong_region_wrong: float
    region_accuracy: float


def region_level_breakdown(preds: Sequence[Scored], taxonomy: Taxonomy) -> RegionDecomposition|None:
    """ Split samples into nationality correct, nationality wrong but region
        right, and both wrong. None for an empty prediction set.
    """
    n = len(preds)
    if n == 0:
        return None
    correct = wrong_same = 0
    for gold, ranks in preds:
        if ranks[0] == gold:
            correct += 1
        elif same_region(taxonomy, gold, ranks[0]):
            wrong_same += 1
    return RegionDecomposition(correct / n, wrong_same / n, (n - correct - wrong_same) / n,
                               (correct + wrong_same) / n)


def region_accuracy(preds: Sequence[Scored], taxonomy: Taxonomy) -> float:
    _check(preds)
    hits = sum(gold == ranks[0] or same_region(taxonomy, gold, ranks[0]) for gold, ranks in preds)
    return hits / len(preds)


def fingerprint_config(model_id: str, config: PredictConfig, seed: int|None = None,
                       taxonomy_fingerprint: str = '') -> str:
    description = describe_config(model_id, config, seed, taxonomy_fingerprint)
    return stable_hash(json.dumps(description, sort_keys=True))[:16]


def describe_config(model_id: str, config: PredictConfig, seed: int|None = None,
                    taxonomy_fingerprint: str = '') -> dict[str, Any]:
    return {
        'model_id': model_id,
        'M': config.m,
        'K': config.k,
        'granularity': config.granularity.value,
        'region_mode': config.region_mode.value,
        'ablation': config.ablation.to_json(),
        'seed': seed,
        'taxonomy': taxonomy_fingerprint,
    }


@dataclass
class EvalReport:
    method: str
    granularity: Granularity
    samples: int
    accuracy: float
    macro_f1: float
    precision_at: dict[int, float]
    per_bin: dict[str, BinMetrics|None] = field(default_factory=dict)
    relative_drop: float|None = None
    confusion_pairs: list[ConfusionPair] = field(default_factory=list)
    region_match_rate: float|None = None
    region_decomposition: RegionDecomposition|None = None
    calls: CallAccounting = field(default_factory=CallAccounting)
    fallback_rate: float = 0.0
    config_fingerprint: str = ''
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def mean_calls(self) -> float:
        return self.calls.total / self.samples if self.samples else 0.0

    def to_json(self) -> dict[str, Any]:
        return {
            'method': self.method,
            'granularity': self.granularity.value,
            'samples': self.samples,
            'accuracy': self.accuracy,
            'macro_f1': self.macro_f1,
            'precision_at': {str(k): v for k, v in sorted(self.precision_at.items())},
            'per_bin': {b: (m._asdict() if m else None) for b, m in self.per_bin.items()},
            'relative_drop': self.relative_drop,
            'confusion_pairs': [p._asdict() for p in self.confusion_pairs],
            'region_match_rate': self.region_match_rate,
            'region_decomposition': self.region_decomposition._asdict() if self.region_decomposition else None,
            'calls': self.calls.to_json(),
            'mean_calls': self.mean_calls,
            'fallback_rate': self.fallback_rate,
            'config_fingerprint': self.config_fingerprint,
            'config': self.config,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> 'EvalReport':
        try:
            decomposition = data.get('region_decomposition')
            return cls(
                method=data.get('method', ''),
                granularity=Granularity.parse(data.get('granularity', 'nationality')),
                samples=int(data['samples']),
                accuracy=float(data['accuracy']),
                macro_f1=float(data['macro_f1']),
                precision_at={int(k): float(v) for k, v in data.get('precision_at', {}).items()},
                per_bin={b: (BinMetrics(**m) if m else None) for b, m in data.get('per_bin', {}).items()},
                relative_drop=data.get('relative_drop'),
                confusion_pairs=[ConfusionPair(**p) for p in data.get('confusion_pairs', [])],
                region_match_rate=data.get('region_match_rate'),
                region_decomposition=RegionDecomposition(**decomposition) if decomposition else None,
                calls=CallAccounting.from_json(data.get('calls', {})),
                fallback_rate=float(data.get('fallback_rate', 0.0)),
                config_fingerprint=data.get('config_fingerprint', ''),
                config=data.get('config', {}),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise EvaluationError(f'Malformed evaluation report: {e!r}')


def evaluate_predictions(records: Sequence[PredictionRecord], taxonomy: Taxonomy,
                         bins: FrequencyBins|None = None, ks: Sequence[int]|None = None,
                         granularity: Granularity|None = None, method: str = 'namerecall',
                         top_n: int = 10, config_fingerprint: str = '',
                         config: dict[str, Any]|None = None) -> EvalReport:
    """ Build the full report for a set of prediction records. Records with
        no gold label are skipped. Frequency bins, confusion pairs and the
        region decomposition only apply at nationality granularity.
    """
    scored_records = [r for r in records if r.gold]
    if len(scored_records) < len(records):
        logging.warning(f'Skipping {len(records) - len(scored_records)} records with no gold label')
    if not scored_records:
        raise EvaluationError('No prediction records with a gold label')
    kinds = {r.granularity for r in scored_records}
    if granularity is None:
        if len(kinds) > 1:
            raise EvaluationError('Prediction records mix granularities')
        granularity = kinds.pop()
    if ks:
        ks = tuple(sorted(set(ks)))
    else:
        # Defaults stop at the shortest ranking; explicit cut-offs are checked.
        shortest = min(len(r.ranks) for r in scored_records)
        ks = tuple(k for k in default_ks(granularity) if k <= shortest) or (1,)
    if not config_fingerprint:
        fingerprints = {r.config_fingerprint for r in scored_records}
        config_fingerprint = fingerprints.pop() if len(fingerprints) == 1 else ''

    preds: list[Scored] = []
    for r in scored_records:
        gold = taxonomy.normalize(r.gold, granularity)
        if gold is None and granularity is not Granularity.NATIONALITY:
            # Gold files usually hold nationalities; compare at the coarser level.
            nationality = taxonomy.normalize(r.gold)
            gold = taxonomy.coarsen(nationality, granularity) if nationality else None
        if gold is None:
            raise EvaluationError(f'Gold label {r.gold!r} for {r.name!r} is not a {granularity.noun}')
        preds.append((gold, r.ranks))

    calls = CallAccounting()
    for r in scored_records:
        calls = calls + r.calls
    report = EvalReport(
        method=method,
        granularity=granularity,
        samples=len(preds),
        accuracy=accuracy(preds),
        macro_f1=macro_f1(preds, taxonomy.labels(granularity)),
        precision_at={k: precision_at_k(preds, k) for k in ks},
        calls=calls,
        fallback_rate=sum(r.used_fallback for r in scored_records) / len(scored_records),
        config_fingerprint=config_fingerprint,
        config=config or {},
    )
    if granularity is Granularity.NATIONALITY:
        if bins is not None:
            by_bin = bin_stratified_eval(preds, bins)
            report.per_bin, report.relative_drop = by_bin.bins, by_bin.relative_drop
        summary = confusion_pairs(preds, taxonomy, top_n)
        report.confusion_pairs, report.region_match_rate = summary.pairs, summary.region_match_rate
        report.region_decomposition = region_level_breakdown(preds, taxonomy)
    logging.info(f'Evaluated {report.samples} samples: accuracy {report.accuracy:.3f}, '
                 f'macro-F1 {report.macro_f1:.3f}')
    return report


class ErrorExample(NamedTuple):
    name: str
    gold: str
    prediction: str
    region_match: bool


def error_examples(records: Iterable[PredictionRecord], taxonomy: Taxonomy) -> list[ErrorExample]:
    rtn = []
    for r in records:
        if r.gold and r.ranks and r.ranks[0] != r.gold:
            match = r.granularity is Granularity.NATIONALITY and same_region(taxonomy, r.gold, r.ranks[0])
            rtn.append(ErrorExample(r.name, r.gold, r.ranks[0], match))
    return rtn


class AblationResult(NamedTuple):
    reports: dict[str, EvalReport]
    delta: dict[str, float|None]


def ablation_deltas(reports: dict[str, EvalReport]) -> dict[str, float|None]:
    """ Accuracy difference of each configuration from `full`. """
    full = reports.get('full')
    return {name: (r.accuracy - full.accuracy if full else None) for name, r in reports.items()}


async def run_ablation(test_set: Sequence[LabeledName], configs: Sequence[Ablation], base: PredictConfig,
                       backend: ChatBackend, taxonomy: Taxonomy, bins: FrequencyBins|None = None,
                       frequency_order: Sequence[str]|None = None, concurrency_limit: int = 8,
                       seed: int|None = None) -> AblationResult:
    """ Run the pipeline once per ablation on the same names and evaluate
        each run.
    """
    if not configs:
        raise EvaluationError('No ablation configurations given')
    names = [item.name for item in test_set]
    reports: dict[str, EvalReport] = {}
    for ablation in configs:
        config = PredictConfig(base.m, base.k, base.granularity, base.region_mode, ablation, base.reprompt)
        fingerprint = fingerprint_config(backend.model_id, config, seed, taxonomy.fingerprint)
        logging.info(f'Running ablation {ablation.name} on {len(names)} names')
        predictions = await predict_many(names, config, backend, taxonomy, frequency_order, concurrency_limit)
        records = [make_record(item.name, item.nationality, p, config.granularity, False, fingerprint)
                   for item, p in zip(test_set, predictions)]
        reports[ablation.name] = evaluate_predictions(
            records, taxonomy, bins, method=ablation.name,
            config_fingerprint=fingerprint,
            config=describe_config(backend.model_id, config, seed, taxonomy.fingerprint))
    return AblationResult(reports, ablation_deltas(reports))


class MetricSummary(NamedTuple):
    mean: float
    std: float
    runs: int


def _scalar_metrics(report: EvalReport) -> dict[str, float|None]:
    rtn: dict[str, float|None] = {
        'accuracy': report.accuracy,
        'macro_f1': report.macro_f1,
    }
    for k, v in report.precision_at.items():
        rtn[f'P@{k}'] = v
    for b, m in report.per_bin.items():
        rtn[f'{b}_accuracy'] = m.accuracy if m else None
    rtn['relative_drop'] = report.relative_drop
    rtn['region_match_rate'] = report.region_match_rate
    rtn['region_accuracy'] = report.region_decomposition.region_accuracy if report.region_decomposition else None
    rtn['fallback_rate'] = report.fallback_rate
    rtn['mean_calls'] = report.mean_calls
    return rtn


def average_reports(reports: Sequence[EvalReport]) -> dict[str, MetricSummary]:
    """ Mean and sample standard deviation of each scalar metric over several
        runs. Metrics missing from any run are left out.
    """
    if not reports:
        raise EvaluationError('No reports to average')
    per_run = [_scalar_metrics(r) for r in reports]
    rtn: dict[str, MetricSummary] = {}
    for metric in per_run[0]:
        values = [m.get(metric) for m in per_run]
        if any(v is None for v in values):
            continue
        arr = np.array(values, dtype=float)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        rtn[metric] = MetricSummary(float(arr.mean()), std, len(arr))
    return rtn
