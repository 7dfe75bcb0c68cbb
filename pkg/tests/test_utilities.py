#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `utilities` module."""

import os
import shutil
import tempfile
import unittest

import numpy as np

from lutlm import preprocess as pp
from lutlm import utilities as u
from lutlm.tokenizer import Tokenizer, Vocabulary, load_vocabulary


class TestPlanted(unittest.TestCase):
    """Test the planted-category corpus"""
    def setUp(self):
        """Test instance setup"""
        self.dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.dir)

    def test_disjoint_slots(self):
        """Test that each tweet uses only its own category's slot words"""
        words = [set(w for values in category.values() for w in values) for category in u.SLOTS]
        self.assertFalse(words[0] & words[1])

        lines, labels = u.planted_corpus(200, seed=3)
        self.assertEqual(len(lines), len(labels))
        self.assertEqual(set(labels), {0, 1})
        for line, label in zip(lines, labels):
            tokens = set(line.split())
            self.assertTrue(tokens & words[label])
            self.assertFalse(tokens & words[1 - label])

    def test_reproducible(self):
        """Test that the seed fixes the corpus"""
        self.assertEqual(u.planted_corpus(20, seed=1), u.planted_corpus(20, seed=1))
        self.assertNotEqual(u.planted_corpus(20, seed=1)[0], u.planted_corpus(20, seed=2)[0])

    def test_write(self):
        """Test that the written files load as a vocabulary and corpus"""
        paths = u.write_planted(os.path.join(self.dir, 'planted'), 30, seed=0)
        self.assertEqual(set(paths), {'corpus', 'vocab', 'emoticons', 'labels'})
        vocab = load_vocabulary(paths['vocab'], paths['emoticons'])
        self.assertEqual(len(vocab), sum(len(group) for group in u.planted_vocabulary()))
        self.assertEqual(len(pp.read_corpus(paths['corpus'])), 30)

        # Every planted token is known to the vocabulary
        tokenizer = Tokenizer(vocab)
        for line in pp.read_corpus(paths['corpus']):
            self.assertNotIn(vocab.unk_id, tokenizer.encode(line))


class TestCollate(unittest.TestCase):
    """Test batch collation"""
    def setUp(self):
        """Test instance setup"""
        tokens, emoticons = u.planted_vocabulary()
        self.vocab = Vocabulary(tokens + emoticons, emoticons=emoticons, base_size=len(tokens))
        lines, _ = u.planted_corpus(10, seed=5)
        self.examples = pp.prepare_examples(lines, Tokenizer(self.vocab), seed=5, max_length=32)

    def test_shapes(self):
        """Test the trimmed width, the flattened masks and the counts"""
        batch = u.collate(self.examples[:4], len(self.vocab))
        width = max(example.true_length for example in self.examples[:4])
        self.assertEqual(len(batch), 4)
        self.assertEqual(batch.input_ids.shape, (4, width))
        self.assertEqual(len(batch.masked_positions), sum(len(e.masked_positions) for e in self.examples[:4]))

        example_index, positions = batch.masked_index
        np.testing.assert_array_equal(example_index[:len(self.examples[0].masked_positions)], 0)
        np.testing.assert_array_equal(positions[:len(self.examples[0].masked_positions)], self.examples[0].masked_positions)

        np.testing.assert_array_equal(batch.counts_full.sum(axis=1), [len(e.unmasked_ids_full) for e in self.examples[:4]])
        np.testing.assert_array_equal(batch.counts_a.sum(axis=1) + batch.counts_b.sum(axis=1), batch.counts_full.sum(axis=1))

    def test_empty(self):
        """Test that an empty batch is refused"""
        self.assertRaises(ValueError, u.collate, [], len(self.vocab))


if __name__ == '__main__':
    unittest.main()
