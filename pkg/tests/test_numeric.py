#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for `numeric` module."""

import unittest

import numpy as np

from lutlm import numeric as nm


class TestTensor(unittest.TestCase):
    """Test Tensor object"""
    def test_immutable(self):
        """Test that tensor values cannot be written"""
        t = nm.Tensor([1., 2.])
        with self.assertRaises(ValueError):
            t.data[0] = 5.

    def test_non_finite(self):
        """Test that a non-finite result names the primitive"""
        with self.assertRaises(nm.NumericError) as err:
            nm.log(nm.Tensor([0., 1.]))

        self.assertIn('log', str(err.exception))

    def test_trainable_needs_name(self):
        """Test that trainable tensors are named"""
        self.assertRaises(ValueError, nm.Tensor, [1.], trainable=True)

    def test_precision(self):
        """Test the precision switch"""
        self.assertEqual(nm.Tensor([1.]).dtype, np.float32)
        with nm.precision('float64'):
            self.assertEqual(nm.Tensor([1.]).dtype, np.float64)

        self.assertEqual(nm.get_precision(), np.float32)
        self.assertRaises(ValueError, nm.set_precision, 'int32')


class TestPrimitives(unittest.TestCase):
    """Test the forward values of the primitives"""
    def test_trailing_vector(self):
        """Test that a vector applies to every row and anything else must match"""
        out = nm.add(np.ones((2, 3)), np.array([1., 2., 3.]))
        np.testing.assert_array_equal(out.data, [[2., 3., 4.], [2., 3., 4.]])
        self.assertRaises(nm.ShapeError, nm.add, np.ones((2, 3)), np.ones(2))
        self.assertRaises(nm.ShapeError, nm.matmul, np.ones((2, 3)), np.ones((2, 3)))

    def test_softmax(self):
        """Test normalization, overflow guarding and masking"""
        probs = nm.softmax(np.array([[1000., 1000.], [0., np.log(3.)]])).data
        np.testing.assert_allclose(probs, [[0.5, 0.5], [0.25, 0.75]], rtol=1e-6)

        masked = nm.softmax(np.array([[1., 2., 3.]]), mask=np.array([[True, False, True]])).data
        self.assertEqual(masked[0, 1], 0.)
        self.assertAlmostEqual(masked.sum(), 1., places=6)

        self.assertRaises(ValueError, nm.softmax, np.ones((1, 2)), mask=np.zeros((1, 2), dtype=bool))
        self.assertRaises(ValueError, nm.softmax, np.ones((2, 0)))

    def test_cross_entropy(self):
        """Test cross-entropy of uniform and confident logits"""
        losses = nm.cross_entropy(np.zeros((2, 7)), [0, 3]).data
        np.testing.assert_allclose(losses, np.log(7.), rtol=1e-6)

        confident = nm.cross_entropy(np.array([[10., -10.]]), [0]).item()
        self.assertLess(confident, 1e-4)

    def test_layer_normalize(self):
        """Test zero mean and unit variance rows"""
        x = np.random.default_rng(0).normal(size=(4, 8))
        out = nm.layer_normalize(x, np.ones(8), np.zeros(8)).data
        np.testing.assert_allclose(out.mean(axis=-1), 0., atol=1e-5)
        np.testing.assert_allclose(out.std(axis=-1), 1., atol=1e-4)

    def test_take_rows(self):
        """Test embedding lookup and its range check"""
        table = np.arange(6.).reshape(3, 2)
        np.testing.assert_array_equal(nm.take_rows(table, [[2, 0]]).data, [[[4., 5.], [0., 1.]]])
        self.assertRaises(IndexError, nm.take_rows, table, [3])

    def test_masked_mean(self):
        """Test the mean over selected elements"""
        out = nm.masked_mean(np.array([[1., 3., 100.]]), np.array([[1, 1, 0]])).item()
        self.assertAlmostEqual(out, 2.)
        self.assertRaises(ValueError, nm.masked_mean, np.ones(2), np.zeros(2))

    def test_large_logits(self):
        """Test that softmax and cross-entropy stay finite at logits near 1e4"""
        logits = np.array([[1e4, 1e4 - 1., -1e4], [-1e4, -1e4, -1e4 + 2.]])
        probs = nm.softmax(logits).data
        self.assertTrue(np.all(np.isfinite(probs)))
        np.testing.assert_allclose(probs.sum(axis=-1), 1., rtol=1e-6)
        self.assertAlmostEqual(probs[0, 0] / probs[0, 1], np.e, places=4)
        self.assertEqual(probs[0, 2], 0.)

        with nm.precision('float64'):
            x = nm.Tensor(logits, name='x', trainable=True)
            with nm.ComputationRecord():
                losses = nm.cross_entropy(x, [1, 0])
                total = nm.reduce_sum(losses)

            grad = nm.gradients(total, [x])[0]

        np.testing.assert_allclose(losses.data, [1. + np.log1p(np.exp(-1.)), 2. + np.log1p(2. * np.exp(-2.))], rtol=1e-9)
        self.assertTrue(np.all(np.isfinite(grad)))
        np.testing.assert_allclose(grad.sum(axis=-1), 0., atol=1e-12)


class TestGradients(unittest.TestCase):
    """Test recorded gradients"""
    def setUp(self):
        """Test instance setup"""
        self.rng = np.random.default_rng(1)

    def test_square(self):
        """Test the gradient of a sum of squares"""
        x = nm.Tensor([1., -2., 3.], name='x', trainable=True)
        with nm.ComputationRecord():
            loss = nm.reduce_sum(nm.mul(x, x))

        np.testing.assert_allclose(nm.gradients(loss, [x])[0], [2., -4., 6.])
        self.assertEqual(list(nm.gradients(loss)), ['x'])

    def test_unreached(self):
        """Test that an unused parameter gets a zero gradient"""
        x = nm.Tensor([1.], name='x', trainable=True)
        y = nm.Tensor([[1., 2.]], name='y', trainable=True)
        with nm.ComputationRecord():
            loss = nm.reduce_sum(nm.scale(x, 3.))

        grads = nm.gradients(loss, [x, y])
        np.testing.assert_allclose(grads[0], [3.])
        np.testing.assert_array_equal(grads[1], np.zeros((1, 2)))

    def test_scalar_loss(self):
        """Test that only scalar losses can be differentiated"""
        x = nm.Tensor([1., 2.], name='x', trainable=True)
        with nm.ComputationRecord():
            out = nm.scale(x, 2.)

        self.assertRaises(nm.ShapeError, nm.gradients, out)

    def test_no_record_outside(self):
        """Test that nothing is recorded without an active record"""
        x = nm.Tensor([1.], name='x', trainable=True)
        out = nm.scale(x, 2.)
        self.assertFalse(out.requires_grad)

    def test_finite_difference(self):
        """Test a composite of every differentiable primitive against central differences"""
        with nm.precision('float64'):
            names = ['w', 'v', 'gain', 'shift', 'table']
            shapes = [(4, 4), (4,), (4,), (4,), (5, 4)]
            params = [nm.Tensor(self.rng.normal(0, 0.5, shape), name=name, trainable=True) for name, shape in zip(names, shapes)]
            mask = np.array([[True, True, False]])

            def function(p):
                w, v, gain, shift, table = p
                x = nm.take_rows(table, [[1, 3, 4]])
                h = nm.layer_normalize(nm.add(nm.matmul(x, w), v), gain, shift)
                h = nm.concat([nm.gelu(h), nm.tanh(h)], axis=-1)
                scores = nm.matmul(h, nm.transpose(h))
                attn = nm.softmax(scores, mask=mask)
                pooled = nm.select(nm.matmul(attn, h), (np.array([0, 0]), np.array([0, 1])))
                probs = nm.logistic(pooled)
                ce = nm.cross_entropy(nm.reshape(pooled, (4, 4)), [0, 1, 2, 3])
                extra = nm.reduce_mean(nm.sqrt(nm.add_scalar(nm.mul(probs, probs), 1.)))
                return nm.add(nm.reduce_sum(ce), nm.reduce_sum(nm.log(nm.add_scalar(probs, 1.))) + extra)

            error = nm.finite_difference_check(function, params, step=1e-5)

        self.assertLess(error, 1e-4)

    def test_finite_difference_precision(self):
        """Test that the checker refuses 32-bit tensors and bad steps"""
        x = nm.Tensor([1.], name='x', trainable=True)
        self.assertRaises(ValueError, nm.finite_difference_check, lambda p: nm.reduce_sum(p[0]), [x])
        with nm.precision('float64'):
            self.assertRaises(ValueError, nm.finite_difference_check, lambda p: nm.reduce_sum(p[0]), [x], step=1e-2)

    def test_doubled_gradient(self):
        """Test that the checker flags a gradient off by a factor of two"""
        with nm.precision('float64'):
            x = nm.Tensor(self.rng.normal(0, 1, (3, 4)), name='x', trainable=True)

            def function(p):
                return nm.reduce_sum(nm.mul(nm.tanh(p[0]), p[0]))

            with nm.ComputationRecord():
                loss = function([x])

            grad = nm.gradients(loss, [x])[0]
            self.assertLess(nm.finite_difference_check(function, [x]), 1e-4)
            self.assertGreaterEqual(nm.finite_difference_check(function, [x], analytic=[2. * grad]), 0.4)

    def test_shared_input(self):
        """Test that a tensor used twice gets the sum of both paths"""
        with nm.precision('float64'):
            values = self.rng.normal(0, 1, 5)
            x = nm.Tensor(values, name='x', trainable=True)
            a = nm.Tensor(values, name='a', trainable=True)
            b = nm.Tensor(values, name='b', trainable=True)

            def function(first, second):
                return nm.reduce_sum(nm.mul(nm.tanh(first), nm.logistic(nm.scale(second, 2.))))

            with nm.ComputationRecord():
                shared = function(x, x)
            with nm.ComputationRecord():
                separate = function(a, b)

            grads = nm.gradients(separate)
            np.testing.assert_allclose(nm.gradients(shared)['x'], grads['a'] + grads['b'], rtol=1e-12)
            self.assertAlmostEqual(shared.item(), separate.item(), places=12)

    def test_each_primitive(self):
        """Test every differentiable primitive on its own against central differences"""
        mask = np.array([[True, True, False, True]])
        cases = [('add', [(3, 4), (4,)], lambda p: nm.add(*p)),
                 ('sub', [(3, 4), (3, 4)], lambda p: nm.sub(*p)),
                 ('mul', [(3, 4), (3, 4)], lambda p: nm.mul(*p)),
                 ('mul trailing', [(2, 3, 4), (4,)], lambda p: nm.mul(*p)),
                 ('scale', [(3, 4)], lambda p: nm.scale(p[0], -1.7)),
                 ('add_scalar', [(3, 4)], lambda p: nm.add_scalar(p[0], 0.3)),
                 ('scale_rows', [(2, 3, 4), (2, 3)], lambda p: nm.scale_rows(*p)),
                 ('matmul', [(2, 3, 4), (4, 5)], lambda p: nm.matmul(*p)),
                 ('batched matmul', [(2, 3, 4), (2, 4, 5)], lambda p: nm.matmul(*p)),
                 ('transpose', [(2, 3, 4)], lambda p: nm.transpose(p[0], (2, 0, 1))),
                 ('reshape', [(2, 3, 4)], lambda p: nm.reshape(p[0], (6, 4))),
                 ('gelu', [(3, 4)], lambda p: nm.gelu(p[0])),
                 ('logistic', [(3, 4)], lambda p: nm.logistic(p[0])),
                 ('tanh', [(3, 4)], lambda p: nm.tanh(p[0])),
                 ('log', [(3, 4)], lambda p: nm.log(nm.add_scalar(nm.mul(p[0], p[0]), 0.5))),
                 ('sqrt', [(3, 4)], lambda p: nm.sqrt(nm.add_scalar(nm.mul(p[0], p[0]), 0.5))),
                 ('take_rows', [(5, 4)], lambda p: nm.take_rows(p[0], [[0, 2, 2], [4, 1, 0]])),
                 ('select', [(3, 4, 2)], lambda p: nm.select(p[0], (np.array([0, 2, 2]), np.array([1, 1, 3])))),
                 ('concat', [(3, 2), (3, 4)], lambda p: nm.concat(p, axis=-1)),
                 ('reduce_sum', [(3, 4)], lambda p: nm.reduce_sum(p[0], axis=0)),
                 ('reduce_mean', [(3, 4)], lambda p: nm.reduce_mean(p[0], axis=1)),
                 ('masked_sum', [(3, 4)], lambda p: nm.masked_sum(p[0], np.repeat(mask, 3, axis=0), axis=-1)),
                 ('softmax', [(3, 4)], lambda p: nm.softmax(p[0], mask=mask)),
                 ('cross_entropy', [(3, 4)], lambda p: nm.cross_entropy(p[0], [0, 3, 1])),
                 ('layer_normalize', [(3, 4), (4,), (4,)], lambda p: nm.layer_normalize(*p))]

        with nm.precision('float64'):
            for name, shapes, primitive in cases:
                for seed in range(5):
                    rng = np.random.default_rng(seed)
                    params = [nm.Tensor(rng.normal(0, 1, shape), name='p{}'.format(n), trainable=True)
                              for n, shape in enumerate(shapes)]
                    projection = rng.normal(0, 1, primitive(params).shape)

                    def function(p):
                        return nm.reduce_sum(nm.mul(primitive(p), projection))

                    with self.subTest(primitive=name, seed=seed):
                        self.assertLess(nm.finite_difference_check(function, params, step=1e-5), 1e-4)



class TestParameterStore(unittest.TestCase):
    """Test ParameterStore object"""
    def setUp(self):
        """Test instance setup"""
        self.store = nm.ParameterStore({'a': np.ones((2, 2)), 'b': np.zeros(3)})

    def test_registry(self):
        """Test names, counts and duplicate registration"""
        self.assertEqual(self.store.names(), ['a', 'b'])
        self.assertEqual(self.store.count(), 7)
        self.assertRaises(ValueError, self.store.register, 'a', np.ones(1))

    def test_update(self):
        """Test that updates replace values and keep shapes"""
        before = self.store.checksum()
        self.store.update({'b': np.ones(3)})
        self.assertNotEqual(before, self.store.checksum())
        self.assertRaises(nm.ShapeError, self.store.update, {'b': np.ones(4)})

    def test_astype(self):
        """Test casting every tensor"""
        wide = self.store.astype('float64')
        self.assertEqual(wide['a'].dtype, np.float64)
        self.assertEqual(self.store['a'].dtype, np.float32)


if __name__ == '__main__':
    unittest.main()
