""" One function per command-line command. """
import asyncio
import logging
import os
import sys
from typing import Any, Sequence

from .backend import CachingBackend, ChatBackend, HttpChatBackend, ThrottledBackend
from .config import RunConfig
from .dataset import (DEFAULT_RATIOS, assign_frequency_bins, bins_from_manifest, load_manifest, make_manifest,
                      preprocess, read_names, read_raw, read_split_file, stratified_split, write_split)
from .errors import DataError, EvaluationError
from .evaluation import (AblationResult, EvalReport, average_reports, error_examples, evaluate_predictions,
                         fingerprint_config, run_ablation)
from .mock_backend import MockChatBackend, load_mock_kb
from .prediction import ABLATIONS, PredictionRecord, make_record, parse_ablation, predict_many
from .report import ablation_table, average_table, errors_tsv, render_report
from .taxonomy import Taxonomy, load_default_taxonomy, load_taxonomy
from .utils import read_json, read_jsonl, save_result, to_json_line, write_json, write_jsonl


def run_taxonomy(config: RunConfig) -> Taxonomy:
    return load_taxonomy(config.taxonomy_path) if config.taxonomy_path else load_default_taxonomy()


def build_backend(config: RunConfig, taxonomy: Taxonomy) -> ChatBackend:
    """ Mock or live backend, behind the response cache when one is
        configured, behind the global in-flight cap.
    """
    backend: ChatBackend
    if config.mock_kb_path:
        backend = MockChatBackend(load_mock_kb(config.mock_kb_path, taxonomy), taxonomy)
        logging.info(f'Using mock backend with knowledge base {config.mock_kb_path}')
    else:
        backend = HttpChatBackend(config.backend)
        logging.info(f'Using {config.backend.model_id} at {config.backend.base_url}')
    cache_path = config.cache_path or config.backend.cache_path
    if cache_path:
        backend = CachingBackend(backend, cache_path)
    return ThrottledBackend(backend, config.concurrency_limit)


def _frequency_order(manifest_path: str|None) -> list[str]|None:
    if not manifest_path:
        return None
    bins = bins_from_manifest(load_manifest(manifest_path))
    return list(bins.frequency_order) if bins else None


def cmd_prepare_data(raw_path: str, out_dir: str, seed: int = 42, taxonomy: Taxonomy|None = None,
                     min_count: int = 500, max_count: int = 800) -> dict[str, Any]:
    raw = read_raw(raw_path)
    logging.info(f'Read {len(raw)} records from {raw_path}')
    data = preprocess(raw, min_count, max_count, seed, taxonomy)
    split = stratified_split(data, DEFAULT_RATIOS, seed)
    labels = {item.nationality for item in split.train}
    bins = None
    if taxonomy is not None and len(taxonomy.nationalities) % 3 == 0 and labels == set(taxonomy.nationalities):
        bins = assign_frequency_bins(split.train, taxonomy, len(taxonomy.nationalities) // 3)
    else:
        logging.warning('Training labels do not cover the taxonomy; frequency bins are not assigned')
    manifest = make_manifest(split, bins, DEFAULT_RATIOS, min_count, max_count,
                             taxonomy.fingerprint if taxonomy is not None else None)
    write_split(out_dir, split, manifest)
    totals = manifest['totals']
    print(f'{manifest["classes"]} classes, {totals["all"]} samples: '
          f'{totals["train"]} / {totals["validation"]} / {totals["test"]}')
    return manifest


async def _predict(config: RunConfig, taxonomy: Taxonomy, names: Sequence[tuple[str, str|None]],
                   frequency_order: Sequence[str]|None, timing: bool) -> list[PredictionRecord]:
    backend = build_backend(config, taxonomy)
    settings = config.predict_config()
    fingerprint = fingerprint_config(backend.model_id, settings, config.seed, taxonomy.fingerprint)
    try:
        predictions = await predict_many([n for n, _ in names], settings, backend, taxonomy,
                                         frequency_order, config.concurrency_limit)
    finally:
        await backend.aclose()
    return [make_record(n, gold, p, config.granularity, timing, fingerprint)
            for (n, gold), p in zip(names, predictions)]


def cmd_predict(config: RunConfig, names_path: str|None = None, out_path: str|None = None,
                name: str|None = None, manifest_path: str|None = None,
                timing: bool = True) -> list[PredictionRecord]:
    """ Predict one name (`name`) or every name in a names file. Records go
        to `out_path` as JSON lines, or to standard output.
    """
    if name:
        names: list[tuple[str, str|None]] = [(name, None)]
    elif names_path:
        names = read_names(names_path)
    else:
        raise DataError('Nothing to predict: give a name or a names file')
    if not names:
        raise DataError(f'No names found in {names_path}')
    taxonomy = run_taxonomy(config)
    records = asyncio.run(_predict(config, taxonomy, names, _frequency_order(manifest_path), timing))
    if out_path:
        write_jsonl(out_path, [r.to_json() for r in records])
        logging.info(f'Wrote {len(records)} predictions to {out_path}')
    else:
        for r in records:
            sys.stdout.write(to_json_line(r.to_json()))
    return records


def load_predictions(path: str) -> list[PredictionRecord]:
    try:
        return [PredictionRecord.from_json(r) for r in read_jsonl(path)]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f'{path} is not a predictions file: {e!r}')


def cmd_evaluate(predictions_path: str, manifest_path: str|None = None, out_path: str|None = None,
                 ks: Sequence[int]|None = None, errors_path: str|None = None,
                 taxonomy: Taxonomy|None = None) -> EvalReport:
    taxonomy = taxonomy or load_default_taxonomy()
    records = load_predictions(predictions_path)
    bins = bins_from_manifest(load_manifest(manifest_path)) if manifest_path else None
    report = evaluate_predictions(records, taxonomy, bins, ks,
                                  method=os.path.splitext(os.path.basename(predictions_path))[0])
    if out_path:
        write_json(out_path, report.to_json())
    if errors_path:
        save_result(errors_path, errors_tsv(error_examples(records, taxonomy)))
    print(render_report(report))
    return report


def parse_ablations(spec: str|None) -> list[str]:
    names = [s.strip() for s in spec.split(',') if s.strip()] if spec else list(ABLATIONS)
    for n in names:
        parse_ablation(n)
    return names


def cmd_ablate(config: RunConfig, names_path: str, out_dir: str, ablations: str|None = None,
               manifest_path: str|None = None) -> AblationResult:
    configs = [parse_ablation(n) for n in parse_ablations(ablations)]
    test_set = read_split_file(names_path)
    if not test_set:
        raise DataError(f'No labelled names found in {names_path}')
    taxonomy = run_taxonomy(config)
    bins = bins_from_manifest(load_manifest(manifest_path)) if manifest_path else None

    async def run() -> AblationResult:
        backend = build_backend(config, taxonomy)
        try:
            return await run_ablation(test_set, configs, config.predict_config(), backend, taxonomy, bins,
                                      bins.frequency_order if bins else None, config.concurrency_limit,
                                      config.seed)
        finally:
            await backend.aclose()

    result = asyncio.run(run())
    for name, report in result.reports.items():
        write_json(os.path.join(out_dir, f'{name}.report.json'), report.to_json())
    table = ablation_table(result.reports, result.delta)
    save_result(os.path.join(out_dir, 'ablation.txt'), table)
    write_json(os.path.join(out_dir, 'ablation.json'), {
        name: {'accuracy': r.accuracy, 'macro_f1': r.macro_f1, 'delta_accuracy': result.delta[name]}
        for name, r in result.reports.items()
    })
    print(table)
    return result


def load_report(path: str) -> EvalReport:
    data = read_json(path)
    if not isinstance(data, dict):
        raise EvaluationError(f'{path} is not an evaluation report')
    return EvalReport.from_json(data)


def cmd_render_report(paths: Sequence[str]) -> str:
    reports = [load_report(p) for p in paths]
    text = render_report(reports[0]) if len(reports) == 1 else average_table(average_reports(reports))
    print(text)
    return text
