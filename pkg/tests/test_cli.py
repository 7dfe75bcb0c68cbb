#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `cli` module."""

import os
import shutil
import tempfile
import unittest

from click.testing import CliRunner

from lutlm import cli
from lutlm import trainer as tr

RUN_CONFIG = """variant = latent-universal
hidden = 16
heads = 2
ffn = 32
max_positions = 32
latent_dims = 2
recurring_layers = 1
act_max_steps = 3

steps = 4
batch_size = 4
eval_interval = 2
checkpoint_interval = 4
examples = planted/examples.bin
vocab = planted/vocab.txt
emoticons = planted/emoticons.txt
output_dir = {output}
"""


class TestCommands(unittest.TestCase):
    """Test the console commands on a planted corpus"""
    @classmethod
    def setUpClass(cls):
        """Prepare data and train one small model for all tests"""
        cls.dir = tempfile.mkdtemp()
        cls.runner = CliRunner()
        cls.planted = os.path.join(cls.dir, 'planted')
        cls.output = os.path.join(cls.dir, 'run')
        cls.examples = os.path.join(cls.planted, 'examples.bin')

        cls.planted_result = cls.runner.invoke(cli.main, ['planted', '--out', cls.planted, '--tweets', '80', '--seed', '1'])
        cls.prepare_result = cls.runner.invoke(cli.main, [
            'prepare', '--corpus', os.path.join(cls.planted, 'corpus.txt'), '--vocab', os.path.join(cls.planted, 'vocab.txt'),
            '--emoticons', os.path.join(cls.planted, 'emoticons.txt'), '--out', cls.examples, '--max-length', '32'])

        cls.config = os.path.join(cls.dir, 'run.cfg')
        with open(cls.config, 'w') as f:
            f.write(RUN_CONFIG.format(output=cls.output))

        cls.train_result = cls.runner.invoke(cli.main, ['train', '--config', cls.config])
        cls.checkpoint = os.path.join(cls.output, tr.CHECKPOINT_NAME)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.dir)

    def test_planted_and_prepare(self):
        """Test the data commands"""
        self.assertEqual(self.planted_result.exit_code, 0, self.planted_result.output)
        self.assertIn('vocab', self.planted_result.output)
        self.assertEqual(self.prepare_result.exit_code, 0, self.prepare_result.output)
        self.assertTrue(os.path.exists(self.examples))

    def test_train(self):
        """Test the final metrics row and the output paths"""
        self.assertEqual(self.train_result.exit_code, 0, self.train_result.output)
        self.assertIn('\t'.join(tr.COLUMNS), self.train_result.output)
        self.assertTrue(os.path.exists(self.checkpoint))
        self.assertEqual(len(tr.read_metrics(os.path.join(self.output, tr.METRICS_NAME))), 2)

    def test_eval(self):
        """Test scoring the checkpoint"""
        result = self.runner.invoke(cli.main, ['eval', '--checkpoint', self.checkpoint, '--examples', self.examples])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn('mlm_accuracy', result.output)
        self.assertIn('ponder_loss', result.output)

    def test_features(self):
        """Test the distribution followed by the classification vector"""
        result = self.runner.invoke(cli.main, ['features', '--checkpoint', self.checkpoint, '--text', 'back home in krakow . pierogi :)'])
        self.assertEqual(result.exit_code, 0, result.output)
        values = [float(v) for v in result.output.strip().splitlines()[-1].split('\t')]
        self.assertEqual(len(values), 2 + 16)
        self.assertAlmostEqual(sum(values[:2]), 1., places=5)

        empty = self.runner.invoke(cli.main, ['features', '--checkpoint', self.checkpoint, '--text', '   '])
        self.assertNotEqual(empty.exit_code, 0)

    def test_latent_report(self):
        """Test top texts and tokens per category"""
        corpus = os.path.join(self.planted, 'corpus.txt')
        result = self.runner.invoke(cli.main, ['latent-report', '--checkpoint', self.checkpoint, '--corpus', corpus, '--k', '2', '--tokens', '3'])
        self.assertEqual(result.exit_code, 0, result.output)
        lines = [line for line in result.output.splitlines() if '\t' in line]
        self.assertEqual(len(lines), 2 * 2 + 2)
        self.assertTrue(lines[0].startswith('0\t1\t'))
        self.assertTrue(lines[-1].startswith('1\ttokens\t'))

    def test_params(self):
        """Test parameter counts from a config and for the full-size presets"""
        result = self.runner.invoke(cli.main, ['params', '--config', self.config])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn('latent\t', result.output)
        self.assertIn('total\t', result.output)
        self.assertIn('reference_millions', result.output)
        self.assertIn('latent-universal', result.output)

        full = self.runner.invoke(cli.main, ['params', '--full-scale'])
        self.assertEqual(full.exit_code, 0, full.output)
        self.assertNotIn('total\t', full.output)
        for variant in ('base', 'latent', 'universal', 'latent-universal'):
            self.assertIn(variant, full.output)

        self.assertNotEqual(self.runner.invoke(cli.main, ['params']).exit_code, 0)

    def test_compare_and_plot(self):
        """Test the comparison table and the metrics plot"""
        result = self.runner.invoke(cli.main, ['compare', '--examples', self.examples, self.checkpoint])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn('latent-universal', result.output)

        out = os.path.join(self.dir, 'metrics.html')
        result = self.runner.invoke(cli.main, ['plot', '--metrics', os.path.join(self.output, tr.METRICS_NAME), '--out', out])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue(os.path.exists(out))


if __name__ == '__main__':
    unittest.main()
