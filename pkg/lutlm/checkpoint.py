# -*- coding: utf-8 -*-

"""A module to save and load model checkpoints in the LUTLM1 binary format"""

from collections import OrderedDict
import hashlib
import logging
import os
import struct

import numpy as np

from . import numeric as nm
from .config import config_lines, parse_config

logger = logging.getLogger(__name__)

MAGIC = b'LUTLM1'
VERSION = 1
MOMENT_PREFIXES = ('adam.m.', 'adam.v.')
_DIGEST = 32


class CheckpointError(IOError):
    """Raised for files that are not readable checkpoints of this version and configuration"""
    pass


def _block(text):
    """A length-prefixed UTF-8 block"""
    data = text.encode('utf-8')
    return struct.pack('<I', len(data)) + data


def encode_checkpoint(params, config, moments=None, meta=None):
    """
    The checkpoint bytes of a parameter store

    Parameters
    ----------
    params: ParameterStore
        The parameters
    config: ModelConfig
        The configuration, echoed as `key = value` text
    moments: dict (optional)
        Optimizer moment arrays keyed 'adam.m.<name>' and 'adam.v.<name>'
    meta: dict (optional)
        Extra `key = value` entries such as the step and example index

    Returns
    -------
    bytes
        magic, version, config echo, meta, manifest, payload and SHA-256 digest
    """
    arrays = OrderedDict((name, tensor.data) for name, tensor in params.items())
    for name, values in (moments or {}).items():
        arrays[name] = np.asarray(values)

    manifest, chunks, offset = [], [], 0
    for name, values in arrays.items():
        data = np.ascontiguousarray(values, dtype='<f4').tobytes()
        manifest.append('{}\t{}\t{}\t{}'.format(name, ','.join(str(n) for n in np.shape(values)), offset, len(data)))
        chunks.append(data)
        offset += len(data)

    meta_text = ''.join('{} = {}\n'.format(key, value) for key, value in (meta or {}).items())
    body = b''.join([MAGIC, struct.pack('<I', VERSION), _block(config_lines(config)), _block(meta_text),
                     _block('\n'.join(manifest)), struct.pack('<Q', offset)] + chunks)

    return body + hashlib.sha256(body).digest()


def save_checkpoint(path, params, config, moments=None, meta=None):
    """
    Write a checkpoint, replacing any file at the path only once complete

    Parameters
    ----------
    path: str
        The output path
    params: ParameterStore
        The parameters
    config: ModelConfig
        The configuration
    moments: dict (optional)
        Optimizer moments
    meta: dict (optional)
        Step, example index and data paths

    Returns
    -------
    int
        The number of bytes written
    """
    blob = encode_checkpoint(params, config, moments, meta)
    temp = path + '.part'
    with open(temp, 'wb') as f:
        f.write(blob)
    os.replace(temp, path)

    logger.info("checkpoint of %i tensors saved to %s", len(params), path)

    return len(blob)


class Checkpoint(object):
    """
    A class object to load a checkpoint file and hand out its tensors
    """
    def __init__(self, filepath=None, config=None):
        """
        Initialize the Checkpoint object

        Parameters
        ----------
        filepath: str (optional)
            The path to the checkpoint
        config: ModelConfig (optional)
            The requesting configuration; the stored echo must match it
        """
        self.requested = config
        self.version = None
        self.config = None
        self.meta = OrderedDict()
        self.tensors = OrderedDict()
        self.moments = OrderedDict()
        self.checksum_ok = None
        self._file = None

        self.file = filepath

    @property
    def file(self):
        return self._file

    @file.setter
    def file(self, filepath):
        """
        Set the file and load its contents

        Parameters
        ----------
        filepath: str
            The path to the checkpoint
        """
        if filepath is None:
            self._file = None
            return

        # Make sure the file exists
        if not os.path.exists(filepath):
            raise FileNotFoundError("{}: Invalid file".format(filepath))

        with open(filepath, 'rb') as f:
            blob = f.read()

        self._decode(blob, filepath)
        self._file = filepath

    def _decode(self, blob, source):
        """Parse checkpoint bytes into the config, meta and tensors"""
        if blob[:len(MAGIC)] != MAGIC:
            raise CheckpointError("{}: not a checkpoint".format(source))

        try:
            offset = len(MAGIC)
            version, = struct.unpack_from('<I', blob, offset)
            if version != VERSION:
                raise CheckpointError("{}: checkpoint version {} but this reader supports version {}".format(source, version, VERSION))

            texts = []
            offset += 4
            for _ in range(3):
                size, = struct.unpack_from('<I', blob, offset)
                texts.append(blob[offset + 4:offset + 4 + size].decode('utf-8'))
                offset += 4 + size

            expected, = struct.unpack_from('<Q', blob, offset)
            offset += 8
        except (struct.error, UnicodeDecodeError):
            raise CheckpointError("{}: truncated checkpoint header".format(source))

        config_text, meta_text, manifest_text = texts
        actual = len(blob) - offset - _DIGEST
        if actual < expected:
            raise CheckpointError("{}: truncated payload, expected {} bytes but found {}".format(source, expected, max(actual, 0)))

        # Whole-file integrity
        body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
        self.checksum_ok = hashlib.sha256(body).digest() == digest
        if not self.checksum_ok:
            logger.warning("%s: checksum mismatch, the file may be corrupted", source)

        self.version = version
        self.config, _ = parse_config(config_text, source='{} config echo'.format(source))
        if self.requested is not None and config_lines(self.requested) != config_text:
            raise CheckpointError("{}: config echo mismatch\nstored:\n{}requested:\n{}".format(source, config_text, config_lines(self.requested)))

        self.meta = OrderedDict((key.strip(), value.strip()) for key, value in
                                (line.split('=', 1) for line in meta_text.splitlines() if line.strip()))

        position = 0
        payload = blob[offset:offset + expected]
        for line in filter(None, manifest_text.split('\n')):
            name, shape, start, nbytes = line.split('\t')
            start, nbytes = int(start), int(nbytes)
            shape = tuple(int(n) for n in shape.split(',') if n)
            if start != position or nbytes != 4 * int(np.prod(shape)):
                raise CheckpointError("{}: manifest entry '{}' leaves a gap or overlaps".format(source, name))

            values = np.frombuffer(payload, dtype='<f4', count=nbytes // 4, offset=start).reshape(shape).astype(np.float32)
            target = self.moments if name.startswith(MOMENT_PREFIXES) else self.tensors
            target[name] = values
            position += nbytes

        if position != expected:
            raise CheckpointError("{}: manifest covers {} of {} payload bytes".format(source, position, expected))

    @property
    def step(self):
        return int(self.meta.get('step', 0))

    @property
    def example_index(self):
        return int(self.meta.get('example_index', 0))

    def parameters(self, dtype=None):
        """
        The stored parameters as a ParameterStore

        Parameters
        ----------
        dtype: str, type (optional)
            The float type, the current precision by default
        """
        store = nm.ParameterStore()
        for name, values in self.tensors.items():
            store.register(name, values, dtype=np.dtype(dtype).type if dtype else None)

        return store

    def __repr__(self):
        """
        Return the path to the file
        """
        return self.file or 'None'


def load_checkpoint(path, config=None):
    """
    Load a checkpoint file

    Parameters
    ----------
    path: str
        The checkpoint path
    config: ModelConfig (optional)
        The requesting configuration

    Returns
    -------
    Checkpoint
        The loaded checkpoint
    """
    return Checkpoint(path, config=config)
