import hashlib
import json
import os
from typing import Any, Iterable, Iterator

from .errors import DataError


def save_result(target: str, result: str) -> None:
    """ Write `result` into file `target`. Creates intermediate
        directories if needed.
    """
    folder = os.path.dirname(target)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(target, 'w', encoding='utf-8') as f:
        f.write(result)


def read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding='utf-8') as f:
            return f.read().splitlines()
    except FileNotFoundError:
        raise DataError(f'File not found: {path}')
    except OSError as e:
        raise DataError(f'Could not read {path}: {e}')


def read_jsonl(path: str) -> Iterator[dict[str, Any]]:
    for lnum, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f'Error in {path} line {lnum}: {e}')


def write_jsonl(target: str, records: Iterable[dict[str, Any]]) -> None:
    save_result(target, ''.join(to_json_line(r) for r in records))


def to_json_line(record: dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True) + '\n'


def read_json(path: str) -> Any:
    try:
        return json.loads('\n'.join(read_lines(path)))
    except json.JSONDecodeError as e:
        raise DataError(f'{path} is not valid JSON: {e}')


def write_json(target: str, data: Any) -> None:
    save_result(target, json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + '\n')


def stable_hash(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        # Length-prefix each part so ('ab', 'c') and ('a', 'bc') differ.
        h.update(f'{len(p)}:'.encode('utf-8'))
        h.update(p.encode('utf-8'))
    return h.hexdigest()

