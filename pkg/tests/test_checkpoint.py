#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `checkpoint` module."""

from dataclasses import replace
import os
import shutil
import struct
import tempfile
import unittest

import numpy as np

from lutlm import checkpoint as ck
from lutlm.lutlm import LanguageModel, TinyLanguageModel


class TestCheckpoint(unittest.TestCase):
    """Test Checkpoint object"""
    def setUp(self):
        """Test instance setup"""
        self.dir = tempfile.mkdtemp()
        self.path = os.path.join(self.dir, 'model.lutlm')
        self.model = TinyLanguageModel('latent-universal', seed=2)
        moments = {'adam.m.ns.bias': np.array([0.5, -0.5]), 'adam.v.ns.bias': np.array([0.25, 0.25])}
        ck.save_checkpoint(self.path, self.model.params, self.model.config, moments, {'step': 7, 'example_index': 140})

    def tearDown(self):
        shutil.rmtree(self.dir)

    def read(self):
        with open(self.path, 'rb') as f:
            return f.read()

    def write(self, blob):
        with open(self.path, 'wb') as f:
            f.write(blob)

    def test_load(self):
        """Test the config, meta, moments and parameters"""
        ckpt = ck.Checkpoint(self.path, config=self.model.config)
        self.assertEqual(ckpt.config, self.model.config)
        self.assertEqual((ckpt.step, ckpt.example_index), (7, 140))
        self.assertTrue(ckpt.checksum_ok)
        np.testing.assert_array_equal(ckpt.moments['adam.v.ns.bias'], [0.25, 0.25])
        self.assertEqual(ckpt.parameters().checksum(), self.model.checksum())
        self.assertFalse(os.path.exists(self.path + '.part'))

    def test_byte_identical_resave(self):
        """Test that saving a loaded checkpoint reproduces the file"""
        ckpt = ck.load_checkpoint(self.path)
        again = ck.encode_checkpoint(ckpt.parameters(), ckpt.config, ckpt.moments, ckpt.meta)
        self.assertEqual(again, self.read())

    def test_from_checkpoint(self):
        """Test building a model from the file"""
        model = LanguageModel.from_checkpoint(self.path)
        self.assertEqual(model.checksum(), self.model.checksum())
        self.assertEqual(model.config.variant, 'latent-universal')

    def test_bad_magic(self):
        """Test a file that is not a checkpoint"""
        self.write(b'NOTCKP' + bytes(40))
        with self.assertRaises(ck.CheckpointError) as err:
            ck.Checkpoint(self.path)

        self.assertIn('not a checkpoint', str(err.exception))
        self.assertRaises(FileNotFoundError, ck.Checkpoint, os.path.join(self.dir, 'missing.lutlm'))

    def test_version(self):
        """Test that another version is named in the error"""
        blob = self.read()
        self.write(blob[:6] + struct.pack('<I', 2) + blob[10:])
        with self.assertRaises(ck.CheckpointError) as err:
            ck.Checkpoint(self.path)

        self.assertIn('version 2', str(err.exception))
        self.assertIn('version 1', str(err.exception))

    def test_truncated(self):
        """Test a payload cut short"""
        self.write(self.read()[:-100])
        with self.assertRaises(ck.CheckpointError) as err:
            ck.Checkpoint(self.path)

        self.assertIn('truncated payload', str(err.exception))
        self.write(self.read()[:12])
        self.assertRaises(ck.CheckpointError, ck.Checkpoint, self.path)

    def test_checksum(self):
        """Test that a flipped payload bit only warns"""
        blob = bytearray(self.read())
        blob[-ck._DIGEST - 4] ^= 1
        self.write(bytes(blob))
        with self.assertLogs('lutlm.checkpoint', level='WARNING'):
            ckpt = ck.Checkpoint(self.path)

        self.assertFalse(ckpt.checksum_ok)
        self.assertEqual(len(ckpt.tensors), len(self.model.params))

    def test_config_mismatch(self):
        """Test that the stored echo must match the requesting configuration"""
        other = replace(self.model.config, act_max_steps=6)
        self.assertRaises(ck.CheckpointError, ck.Checkpoint, self.path, config=other)


if __name__ == '__main__':
    unittest.main()
