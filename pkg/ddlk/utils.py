import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def seed_stream(*keys):
    """Generator seeded from a tuple of non-negative integers, e.g. (master seed, replication)"""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def spawn_streams(rng, n):
    """Split one generator into n independent child generators"""
    seeds = rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    return [np.random.default_rng(int(s)) for s in seeds]


def thread_budget():
    """Worker cap for joblib, from KNOCKOFF_FORGE_THREADS"""
    from django.conf import settings

    if not settings.configured:
        return max(1, int(os.getenv('KNOCKOFF_FORGE_THREADS', '1')))
    return max(1, int(getattr(settings, 'KNOCKOFF_FORGE_THREADS', 1)))


def jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no infinity; an infinite threshold is written as null
        return value if math.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_json(payload):
    """Deterministic JSON text (sorted keys, no NaN/Inf)"""
    return json.dumps(jsonable(payload), sort_keys=True, indent=2, allow_nan=False) + '\n'


def atomic_write_bytes(path, data):
    """Write to a temp file in the target directory, then rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode('utf-8'))


def write_json(path, payload):
    return atomic_write_text(path, dumps_json(payload))


def write_frame(path, frame):
    """Write a pandas DataFrame as headered UTF-8 CSV, atomically"""
    text = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
    return atomic_write_text(path, text)
