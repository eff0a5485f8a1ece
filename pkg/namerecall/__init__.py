__doc__ = """
namerecall.

Usage:
  namerecall prepare-data [options] <raw> <out_dir>
  namerecall predict [options] (--name NAME | --names FILE)
  namerecall evaluate [options] <predictions>
  namerecall ablate [options] <names> <out_dir>
  namerecall render-report [options] <report>...
  namerecall -h | --help
  namerecall --version

Options:
  --config FILE         YAML run configuration.
  --mock-kb FILE        Answer prompts from a mock knowledge base instead of a live model.
  --taxonomy FILE       Taxonomy file to use instead of the shipped one.
  --granularity G       nationality, region14 or continent6.
  --region-mode MODE    native_prompt or mapped_from_nationality.
  --ablation NAME       full, wo-person, wo-media, wo-completion or wo-recall.
  --recall-size M       People each recall agent may return.
  --top-k K             Number of ranked labels per name.
  --seed N              Random seed for preprocessing and splitting.
  --concurrency N       Maximum requests in flight.
  --cache FILE          JSONL response cache.
  --name NAME           Predict a single name and print its record.
  --names FILE          Names to predict, one per line, optionally `name<TAB>gold`.
  --out FILE            Where to write predictions or the evaluation report.
  --manifest FILE       Split manifest, for frequency bins and padding order.
  --no-timing           Leave elapsed times out of prediction records.
  --k KS                Comma-separated cut-offs for Precision@K.
  --errors FILE         Write misclassified samples to FILE.
  --ablations LIST      Comma-separated ablation configurations [default: full,wo-person,wo-media,wo-completion,wo-recall].
  --min-count N         Drop nationalities with fewer samples [default: 500].
  --max-count N         Subsample nationalities with more samples [default: 800].
  -v --verbose          Debug logging.
  -q --quiet            Only log warnings and errors.

The `prepare-data` command reads a raw `name<TAB>nationality` corpus,
keeps nationalities with at least --min-count samples, caps each
at --max-count by seeded subsampling, and writes an 8:1:1 stratified split
(train.tsv, validation.tsv, test.tsv) plus manifest.json to <out_dir>.
The manifest holds per-class counts and the head/mid/tail frequency bins.

The `predict` command ranks the likely nationalities (or regions, or
continents) of each name. Two recall agents first ask the model for real
people who share the name; their nationalities are voted on to fix rank
1, and a completion call fills the remaining ranks. When nobody is
recalled, a direct prediction fixes rank 1 instead. Records are JSON
lines, written to --out or printed.

The `evaluate` command scores a predictions file: accuracy, Macro-F1,
Precision@K, frequency-bin accuracy (with --manifest), the top confusion
pairs with their region match rate, and the region-level decomposition.

The `ablate` command runs each configuration in --ablations over the
labelled names in <names> and writes one report per configuration, plus
ablation.txt and ablation.json with accuracy differences from `full`.

The `render-report` command prints the tables for one report, or the
mean and standard deviation of each metric over several.

The API key for a live model is read from the environment variable named
in the configuration (OPENAI_API_KEY by default), never from a file.
"""

__version__ = '0.1'

import logging
import sys

from docopt import docopt

from .commands import cmd_ablate, cmd_evaluate, cmd_predict, cmd_prepare_data, cmd_render_report, run_taxonomy
from .config import load_config
from .errors import ConfigError, NameRecallError


def _int(value: str|None, what: str) -> int|None:
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f'{what} must be an integer, got {value!r}')


def _overrides(arguments: dict) -> dict:
    return {
        'mock_kb_path': arguments['--mock-kb'],
        'taxonomy_path': arguments['--taxonomy'],
        'granularity': arguments['--granularity'],
        'region_mode': arguments['--region-mode'],
        'ablation': arguments['--ablation'],
        'm': _int(arguments['--recall-size'], '--recall-size'),
        'k': _int(arguments['--top-k'], '--top-k'),
        'seed': _int(arguments['--seed'], '--seed'),
        'concurrency_limit': _int(arguments['--concurrency'], '--concurrency'),
        'cache_path': arguments['--cache'],
    }


def _run(arguments: dict) -> None:
    config = load_config(arguments['--config'], _overrides(arguments))
    if arguments['prepare-data']:
        cmd_prepare_data(arguments['<raw>'], arguments['<out_dir>'], config.seed, run_taxonomy(config),
                         _int(arguments['--min-count'], '--min-count'), _int(arguments['--max-count'], '--max-count'))
    elif arguments['predict']:
        cmd_predict(config, arguments['--names'], arguments['--out'], arguments['--name'],
                    arguments['--manifest'], timing=not arguments['--no-timing'])
    elif arguments['evaluate']:
        ks = [_int(k.strip(), '--k') for k in arguments['--k'].split(',')] if arguments['--k'] else None
        cmd_evaluate(arguments['<predictions>'], arguments['--manifest'], arguments['--out'], ks,
                     arguments['--errors'], run_taxonomy(config))
    elif arguments['ablate']:
        cmd_ablate(config, arguments['<names>'], arguments['<out_dir>'], arguments['--ablations'],
                   arguments['--manifest'])
    elif arguments['render-report']:
        cmd_render_report(arguments['<report>'])


def main():
    arguments = docopt(__doc__, version=__version__)  # type: ignore
    level = logging.DEBUG if arguments['--verbose'] else logging.WARNING if arguments['--quiet'] else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        _run(arguments)
    except NameRecallError as e:
        logging.error(str(e))
        sys.exit(e.exit_code)
    except FileNotFoundError as e:
        logging.error(f'File not found: {e.filename}')
        sys.exit(3)
    except KeyboardInterrupt:
        logging.error('Interrupted')
        sys.exit(130)
