"""Utility functions for JSON files, table enumeration and parallel sweeps."""
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor, as_completed
from functools import lru_cache

import jsonschema

from config import config
from foundations import EngineError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'schemas')


class InputError(EngineError):
    """A JSON input file that cannot be read or does not fit its schema."""


def load_json(path):
    """
    Read one JSON document.

    Args:
        path: File path, or '-' for stdin

    Returns:
        The decoded document
    """
    try:
        if path == '-':
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")


def versioned(payload):
    """Stamp an output object with the schema version."""
    return {'version': SCHEMA_VERSION, **payload}


def dump_json(payload, out=None):
    """Serialize an output object, writing it to out when a path is given."""
    text = json.dumps(versioned(payload), default=str, indent=2)
    if out:
        with open(out, 'w') as fh:
            fh.write(text + '\n')
    return text


@lru_cache(maxsize=None)
def load_schema(name):
    """The shipped schema schemas/<name>.json."""
    with open(os.path.join(SCHEMA_DIR, f'{name}.json')) as fh:
        return json.load(fh)


def load_input(path, schema):
    """
    Read one JSON document and validate it against a shipped schema.

    Args:
        path: File path, or '-' for stdin
        schema: Schema name under schemas/, e.g. 'step_functional'

    Returns:
        The decoded document

    Raises:
        InputError: unreadable JSON, or the first schema violation
    """
    data = load_json(path)
    validator = jsonschema.Draft202012Validator(load_schema(schema))
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is not None:
        logger.debug('%s failed schema %s: %s', path, schema, error.message)
        raise InputError(f"{path}: {error.json_path}: {error.message}")
    return data


def enumerate_tables(size, values=(0, 1)):
    """Every table of the given size over values, in lexicographic order."""
    return [list(t) for t in itertools.product(values, repeat=size)]


def run_parallel(fn, items, max_workers=None, label=None):
    """
    Apply fn to every item in parallel.

    Args:
        fn: Function of one item
        items: Dict of key -> item, or a list (keys are positions)
        max_workers: Number of parallel workers (default: INDUCT_WORKERS)
        label: Progress prefix; progress is printed only when given

    Returns:
        list: [(key, result)] sorted by key
    """
    if max_workers is None:
        max_workers = config.INDUCT_WORKERS
    if not isinstance(items, dict):
        items = dict(enumerate(items))

    results = {}

    # Submit all jobs in parallel
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {executor.submit(fn, item): key for key, item in items.items()}

        for future in as_completed(futures):
            key = futures[future]
            results[key] = future.result()
            if label:
                print(f"[{label}] {key} done ({len(results)}/{len(items)})")

    logger.debug('parallel sweep of %d items finished', len(items))
    return sorted(results.items(), key=lambda kv: kv[0])
