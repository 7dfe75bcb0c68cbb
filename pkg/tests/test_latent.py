#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `latent` module."""

import unittest

import numpy as np

from lutlm import latent as lt
from lutlm import numeric as nm
from lutlm import tokenizer as tk


class TestDistributions(unittest.TestCase):
    """Test category distributions"""
    def setUp(self):
        """Test instance setup"""
        self.matrix = np.array([[np.log(2.), 0., 0.], [0., 0., 0.]])

    def test_known_value(self):
        """Test one token whose row favors the first category"""
        p = lt.latent_distribution(self.matrix, [0]).data
        np.testing.assert_allclose(p, [0.665, 0.335], atol=1e-6)

    def test_empty_is_uniform(self):
        """Test that no tokens give the uniform distribution"""
        p = lt.latent_distribution(self.matrix, []).data
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-7)

    def test_bounds(self):
        """Test floor / L <= p_i <= mix + floor / L and a unit sum"""
        rng = np.random.default_rng(0)
        matrix = rng.normal(0., 5., (4, 12))
        counts = rng.integers(0, 4, (30, 12))
        p = lt.latent_distributions(matrix, counts).data
        np.testing.assert_allclose(p.sum(axis=-1), 1., atol=1e-5)
        self.assertTrue(np.all(p >= 0.01 / 4 - 1e-7))
        self.assertTrue(np.all(p <= 0.99 + 0.01 / 4 + 1e-7))

    def test_order_independence(self):
        """Test that the multiset order does not matter"""
        rng = np.random.default_rng(1)
        matrix = rng.normal(size=(3, 10))
        ids = [1, 4, 4, 9, 2]
        first = lt.latent_distribution(matrix, ids).data
        second = lt.latent_distribution(matrix, ids[::-1]).data
        np.testing.assert_allclose(first, second, atol=1e-7)

    def test_shift_invariance(self):
        """Test that adding a constant to every row leaves p unchanged"""
        rng = np.random.default_rng(2)
        matrix = rng.normal(size=(3, 10))
        first = lt.latent_distribution(matrix, [0, 5, 7]).data
        second = lt.latent_distribution(matrix + 3., [0, 5, 7]).data
        np.testing.assert_allclose(first, second, atol=1e-6)

    def test_counts(self):
        """Test the count matrix and its range check"""
        counts = lt.count_matrix([[0, 2, 2], []], 3)
        np.testing.assert_array_equal(counts, [[1, 0, 2], [0, 0, 0]])
        self.assertRaises(IndexError, lt.count_matrix, [[3]], 3)
        self.assertRaises(nm.ShapeError, lt.latent_distributions, self.matrix, np.ones((1, 4)))


class TestBiasAndFeatures(unittest.TestCase):
    """Test the example bias and the distance features"""
    def test_example_bias(self):
        """Test the expected bias under a distribution"""
        matrix = np.array([[4., 1.], [0., 1.]])
        bias = lt.example_bias(matrix, np.array([0.25, 0.75])).data
        np.testing.assert_allclose(bias, [1., 1.])

        rows = lt.example_bias(matrix, np.array([[1., 0.], [0., 1.]])).data
        np.testing.assert_allclose(rows, matrix)

    def test_zero_matrix(self):
        """Test that a zero matrix gives a zero bias and zero features"""
        matrix = np.zeros((2, 5))
        p_a = lt.latent_distribution(matrix, [1, 2]).data
        p_b = lt.latent_distribution(matrix, [3]).data
        np.testing.assert_array_equal(lt.example_bias(matrix, p_a).data, np.zeros(5))
        np.testing.assert_allclose(lt.distance_features(p_a, p_b).data, [0., 0.], atol=1e-7)

    def test_known_features(self):
        """Test the euclidean distance and KL divergence of two distributions"""
        features = lt.distance_features(np.array([0.6, 0.4]), np.array([0.4, 0.6])).data
        np.testing.assert_allclose(features, [0.28284, 0.081093], atol=1e-5)

        batched = lt.distance_features(np.array([[0.7, 0.3], [0.5, 0.5]]), np.array([[0.5, 0.5], [0.5, 0.5]])).data
        self.assertEqual(batched.shape, (2, 2))
        np.testing.assert_allclose(batched[1], [0., 0.], atol=1e-7)

    def test_kl_asymmetry(self):
        """Test that the divergence depends on the order"""
        p, q = np.array([0.9, 0.1]), np.array([0.4, 0.6])
        forward = lt.distance_features(p, q).data
        backward = lt.distance_features(q, p).data
        self.assertAlmostEqual(forward[0], backward[0], places=6)
        self.assertGreater(abs(forward[1] - backward[1]), 1e-3)


class TestRanking(unittest.TestCase):
    """Test the per-category reports"""
    def test_top_examples(self):
        """Test ranking by probability with stable ties"""
        distributions = np.array([[0.9, 0.1], [0.2, 0.8], [0.9, 0.1], [0.5, 0.5]])
        ranking = lt.top_examples_per_category(distributions, 2)
        self.assertEqual([n for n, _ in ranking[0]], [0, 2])
        self.assertEqual([n for n, _ in ranking[1]], [1, 3])
        self.assertAlmostEqual(ranking[1][0][1], 0.8)

        self.assertEqual(len(lt.top_examples_per_category(distributions, 10)[0]), 4)
        self.assertRaises(ValueError, lt.top_examples_per_category, distributions, 0)

    def test_top_tokens(self):
        """Test the largest-bias tokens of each row"""
        vocab = tk.Vocabulary(list(tk.SPECIALS) + ['tacos', 'pierogi'])
        matrix = np.zeros((2, 7))
        matrix[0, 5], matrix[1, 6] = 3., 2.
        ranking = lt.top_tokens_per_category(matrix, vocab, 1)
        self.assertEqual(ranking, [[('tacos', 3.)], [('pierogi', 2.)]])


if __name__ == '__main__':
    unittest.main()
