"""
Model file container.

Layout: 8 magic bytes, the header length as a little-endian uint32, a UTF-8
JSON header (sorted keys), then little-endian float64 parameter blocks in
the order of the header's block table. The header is self-describing:
loading checks the magic, format version, ordering, network shape and
block sizes before building anything.
"""

import json
import logging
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autoregressive import ORDERING, AutoregressiveModel
from .datasets import Standardizer
from .exceptions import InvalidInput, ModelFileError
from .gmm_core import SIGMA_FLOOR
from .mdn import SKIP_PLACEMENT, ConditionalDensityNetwork, parameter_layout
from .swap import SwapSampler
from .utils import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b'KFMODEL\x00'
FORMAT_VERSION = 1
FLOAT_DTYPE = np.dtype('<f8')


@dataclass
class StoredModel:
    model: AutoregressiveModel
    standardizer: Standardizer
    sampler: Optional[SwapSampler]
    header: dict

    @property
    def kind(self):
        return self.model.kind


def _blocks(model, sampler):
    blocks = [(f'conditional.{j}', net.params) for j, net in enumerate(model.conditionals)]
    if sampler is not None:
        blocks.append(('swap.logits', sampler.logits))
    return blocks


def encode_model(model, standardizer=None, sampler=None):
    """Bytes of a model file; knockoff models must come with their swap sampler"""
    if model.kind == 'knockoff' and sampler is None:
        raise ModelFileError('a knockoff model file needs the swap sampler')
    if model.kind == 'joint' and sampler is not None:
        raise ModelFileError('a joint model file cannot carry a swap sampler')
    standardizer = standardizer or Standardizer.identity(model.d)
    blocks = _blocks(model, sampler)
    table, offset = [], 0
    for name, values in blocks:
        table.append({'name': name, 'offset': offset, 'count': int(values.size)})
        offset += int(values.size)
    header = {
        'format_version': FORMAT_VERSION,
        'kind': model.kind,
        'd': model.d,
        'K': model.n_components,
        'hidden_units': model.hidden_units,
        'base_dim': model.base_dim,
        'ordering': ORDERING,
        'skip_placement': SKIP_PLACEMENT,
        'sigma_floor': SIGMA_FLOOR,
        'columns': list(model.columns),
        'support': model.support.tolist(),
        'standardization': {'mean': standardizer.mean.tolist(), 'scale': standardizer.scale.tolist()},
        'blocks': table,
    }
    if sampler is not None:
        header['swap_temperature'] = float(sampler.temperature)
    header_bytes = json.dumps(header, sort_keys=True, allow_nan=False).encode('utf-8')
    payload = np.concatenate([np.asarray(values, dtype=np.float64).ravel() for _, values in blocks])
    return MAGIC + struct.pack('<I', len(header_bytes)) + header_bytes + payload.astype(FLOAT_DTYPE).tobytes()


def save_model(path, model, standardizer=None, sampler=None):
    path = atomic_write_bytes(path, encode_model(model, standardizer, sampler))
    logger.info('wrote %s model (d=%d) to %s', model.kind, model.d, path)
    return path


def _require(condition, message):
    if not condition:
        raise ModelFileError(message)


def decode_model(data, source='model file'):
    _require(data[:len(MAGIC)] == MAGIC, f'{source} is not a knockoffforge model file')
    start = len(MAGIC) + 4
    _require(len(data) >= start, f'{source} is truncated')
    (header_length,) = struct.unpack('<I', data[len(MAGIC):start])
    try:
        header = json.loads(data[start:start + header_length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f'{source} has a corrupt header: {exc}')
    _require(isinstance(header, dict), f'{source} has a corrupt header: not an object')

    _require(header.get('format_version') == FORMAT_VERSION, f'{source}: unsupported format version {header.get("format_version")!r}')
    _require(header.get('ordering') == ORDERING, f'{source}: unsupported variable ordering {header.get("ordering")!r}')
    _require(header.get('skip_placement') == SKIP_PLACEMENT, f'{source}: unsupported skip placement')
    kind = header.get('kind')
    _require(kind in ('joint', 'knockoff'), f'{source}: unknown model kind {kind!r}')
    d, K, hidden = header.get('d'), header.get('K'), header.get('hidden_units')
    _require(all(isinstance(v, int) and v >= 1 for v in (d, K, hidden)), f'{source}: invalid d, K or hidden_units')
    base_dim = 0 if kind == 'joint' else d
    _require(header.get('base_dim') == base_dim, f'{source}: base_dim does not match kind {kind!r}')

    body = data[start + header_length:]
    _require(len(body) % FLOAT_DTYPE.itemsize == 0, f'{source}: parameter data is truncated')
    payload = np.frombuffer(body, dtype=FLOAT_DTYPE)
    try:
        return _rebuild(header, kind, d, K, hidden, base_dim, payload, source)
    except ModelFileError:
        raise
    except (InvalidInput, KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
        raise ModelFileError(f'{source}: malformed header or parameter blocks ({type(exc).__name__}: {exc})')


def _rebuild(header, kind, d, K, hidden, base_dim, payload, source):
    blocks = {block['name']: block for block in header['blocks']}
    _require(sum(int(block['count']) for block in blocks.values()) == payload.size, f'{source}: parameter blocks do not match the file size')

    def block(name, count):
        entry = blocks.get(name)
        _require(entry is not None and entry['count'] == count, f'{source}: block {name!r} missing or of the wrong size')
        offset = int(entry['offset'])
        _require(0 <= offset and offset + count <= payload.size, f'{source}: block {name!r} lies outside the file')
        return payload[offset:offset + count].astype(np.float64)

    conditionals = []
    for j in range(d):
        size = parameter_layout(base_dim + j, K, hidden)[1]
        conditionals.append(ConditionalDensityNetwork(base_dim + j, K, hidden, block(f'conditional.{j}', size)))
    support = np.asarray(header['support'], dtype=np.float64)
    _require(support.shape == (d, 2), f'{source}: support does not match d={d}')
    model = AutoregressiveModel(d, base_dim, conditionals, support, tuple(header['columns']))
    standardizer = Standardizer(header['standardization']['mean'], header['standardization']['scale'])
    _require(standardizer.mean.shape == (d,), f'{source}: standardization does not match d={d}')
    sampler = None
    if kind == 'knockoff':
        temperature = header['swap_temperature']
        _require(isinstance(temperature, (int, float)) and temperature > 0, f'{source}: invalid swap temperature')
        sampler = SwapSampler(block('swap.logits', d), float(temperature))
    return StoredModel(model, standardizer, sampler, header)


def load_model(path, expected_kind=None):
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except FileNotFoundError:
        raise ModelFileError(f'no such model file: {path}')
    stored = decode_model(data, source=str(path))
    if expected_kind is not None and stored.kind != expected_kind:
        raise ModelFileError(f'{path} holds a {stored.kind} model, expected {expected_kind}')
    return stored
