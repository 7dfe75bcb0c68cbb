# -*- coding: utf-8 -*-

"""A module for the embedding layer, the stacked encoder and the recurring encoder with adaptive computation time"""

from collections import OrderedDict
from dataclasses import dataclass
import logging
import zlib

import numpy as np

from . import numeric as nm

logger = logging.getLogger(__name__)

# Parameter groups that make up the text representation, as opposed to pretraining heads
REPRESENTATION_GROUPS = ('embeddings', 'blocks', 'unit', 'act', 'pooler', 'latent')


@dataclass
class EncoderOutput:
    """
    Final states plus the per-position computation bookkeeping

    Attributes
    ----------
    states: Tensor
        Shape (batch, positions, hidden)
    ponder_costs: Tensor
        Steps taken plus remainder per position, (batch, positions); 1 for the stacked encoder
    steps_taken: np.ndarray
        Recurrences per position, 0 on padding
    halting_weights: np.ndarray
        Per-step contribution weights, (batch, positions, steps), or None
    """
    states: nm.Tensor
    ponder_costs: nm.Tensor
    steps_taken: np.ndarray
    halting_weights: np.ndarray = None


def _block_shapes(prefix, config):
    """Parameter shapes of one self-attention + feed-forward block"""
    H, F = config.hidden, config.ffn
    shapes = OrderedDict()
    for proj in ('query', 'key', 'value', 'output'):
        shapes['{}attention.{}.weight'.format(prefix, proj)] = (H, H)
        shapes['{}attention.{}.bias'.format(prefix, proj)] = (H,)
    shapes[prefix + 'attention_norm.gain'] = (H,)
    shapes[prefix + 'attention_norm.shift'] = (H,)
    shapes[prefix + 'ffn.inner.weight'] = (H, F)
    shapes[prefix + 'ffn.inner.bias'] = (F,)
    shapes[prefix + 'ffn.outer.weight'] = (F, H)
    shapes[prefix + 'ffn.outer.bias'] = (H,)
    shapes[prefix + 'ffn_norm.gain'] = (H,)
    shapes[prefix + 'ffn_norm.shift'] = (H,)

    return shapes


def parameter_shapes(config):
    """
    The name and shape of every trainable tensor of a configuration

    Parameters
    ----------
    config: ModelConfig
        The model configuration

    Returns
    -------
    OrderedDict
        Name to shape, in registration order
    """
    H, V = config.hidden, config.vocab
    shapes = OrderedDict([('embeddings.token', (V, H)), ('embeddings.position', (config.max_positions, H)),
                          ('embeddings.segment', (2, H)), ('embeddings.norm.gain', (H,)), ('embeddings.norm.shift', (H,))])

    if config.is_universal:
        for j in range(config.recurring_layers):
            shapes.update(_block_shapes('unit.{}.'.format(j), config))
        shapes['act.step_embeddings'] = (config.act_max_steps, H)
        shapes['act.halting.weight'] = (H,)
        shapes['act.halting.bias'] = (1,)
    else:
        for i in range(config.layers_base):
            shapes.update(_block_shapes('blocks.{}.'.format(i), config))

    shapes['pooler.weight'] = (H, H)
    shapes['pooler.bias'] = (H,)
    shapes['mlm.transform.weight'] = (H, H)
    shapes['mlm.transform.bias'] = (H,)
    shapes['mlm.norm.gain'] = (H,)
    shapes['mlm.norm.shift'] = (H,)
    shapes['mlm.bias'] = (V,)
    shapes['ns.weight'] = (config.ns_inputs, 2)
    shapes['ns.bias'] = (2,)
    if config.latent_dims > 0:
        shapes['latent.matrix'] = (config.latent_dims, V)

    return shapes


def count_parameters(config):
    """The exact number of trainable scalars of a configuration"""
    return int(sum(np.prod(shape) for shape in parameter_shapes(config).values()))


def parameter_breakdown(config):
    """
    Trainable scalars per component

    Parameters
    ----------
    config: ModelConfig
        The model configuration

    Returns
    -------
    OrderedDict
        Component to count, then 'representation' (everything but the
        pretraining heads) and 'total'
    """
    breakdown = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        group = name.split('.')[0]
        breakdown[group] = breakdown.get(group, 0) + int(np.prod(shape))

    breakdown['representation'] = sum(count for group, count in breakdown.items() if group in REPRESENTATION_GROUPS)
    breakdown['total'] = count_parameters(config)

    return breakdown


def decays(name):
    """Whether weight decay applies: not to biases, norm gains and shifts, or the latent matrix"""
    return not (name.endswith(('.bias', '.gain', '.shift')) or name == 'latent.matrix')


def _stream(seed, name):
    """A generator determined by the seed and the parameter name alone"""
    return np.random.default_rng([seed, zlib.crc32(name.encode('utf-8'))])


def init_parameters(config, seed=0):
    """
    Initialize every trainable tensor

    Each tensor draws from its own generator keyed by (seed, name), so shared
    tensors of different variants start identical.

    Parameters
    ----------
    config: ModelConfig
        The model configuration
    seed: int
        The seed

    Returns
    -------
    ParameterStore
        The parameters, in the current precision
    """
    config.validate()
    scale = config.initializer_range
    store = nm.ParameterStore()
    for name, shape in parameter_shapes(config).items():
        if name == 'act.halting.bias':
            values = np.full(shape, config.halting_bias_init)
        elif name.endswith('.gain'):
            values = np.ones(shape)
        elif name.endswith(('.bias', '.shift')):
            values = np.zeros(shape)
        elif name == 'ns.weight':
            # Distance-feature rows come from their own stream
            values = _stream(seed, name).normal(0., scale, (config.hidden, 2))
            if config.ns_inputs > config.hidden:
                extra = _stream(seed, 'ns.weight.features').normal(0., scale, (config.ns_inputs - config.hidden, 2))
                values = np.concatenate([values, extra])
        elif name == 'latent.matrix':
            values = _stream(seed, name).normal(0., config.latent_init_range, shape)
        else:
            values = _stream(seed, name).normal(0., scale, shape)

        store.register(name, values)

    logger.debug("initialized %i tensors, %i parameters, for the %s variant", len(store), store.count(), config.variant)

    return store


def embed_inputs(params, input_ids, segment_ids, config):
    """
    Sum token, segment and position embeddings and layer-normalize

    Parameters
    ----------
    params: ParameterStore
        The parameters
    input_ids: array-like
        Token ids, shape (batch, positions) or (positions,)
    segment_ids: array-like
        Segment ids of the same shape
    config: ModelConfig
        The model configuration

    Returns
    -------
    Tensor
        Shape input_ids.shape + (hidden,)
    """
    input_ids = np.asarray(input_ids)
    if input_ids.size and (input_ids.min() < 0 or input_ids.max() >= config.vocab):
        raise IndexError("token id out of range for a vocabulary of {}".format(config.vocab))

    if input_ids.shape[-1] > config.max_positions:
        raise IndexError("{} positions exceed max_positions = {}".format(input_ids.shape[-1], config.max_positions))

    positions = np.broadcast_to(np.arange(input_ids.shape[-1]), input_ids.shape)
    summed = nm.add(nm.add(nm.take_rows(params['embeddings.token'], input_ids),
                           nm.take_rows(params['embeddings.segment'], segment_ids)),
                    nm.take_rows(params['embeddings.position'], positions))

    return nm.layer_normalize(summed, params['embeddings.norm.gain'], params['embeddings.norm.shift'], config.layer_norm_epsilon)


def _dense(x, params, prefix):
    """x @ weight + bias"""
    return nm.add(nm.matmul(x, params[prefix + '.weight']), params[prefix + '.bias'])


def _split_heads(x, heads):
    """(batch, positions, hidden) -> (batch, heads, positions, head size)"""
    B, T, H = x.shape
    return nm.transpose(nm.reshape(x, (B, T, heads, H // heads)), (0, 2, 1, 3))


def encoder_block(states, attention_mask, params, prefix, config, return_attention=False):
    """
    Multi-head self-attention and feed-forward sublayers, each with residual and layer-norm

    Parameters
    ----------
    states: Tensor
        Shape (batch, positions, hidden)
    attention_mask: array-like
        1 on real positions, 0 on padding, shape (batch, positions)
    params: ParameterStore
        The parameters
    prefix: str
        The block's parameter name prefix, e.g. 'blocks.0.'
    config: ModelConfig
        The model configuration
    return_attention: bool
        Also return the attention probabilities

    Returns
    -------
    Tensor
        The new states, same shape
    """
    B, T, H = states.shape
    keys = np.asarray(attention_mask, dtype=bool)[:, None, None, :]

    query = _split_heads(_dense(states, params, prefix + 'attention.query'), config.heads)
    key = _split_heads(_dense(states, params, prefix + 'attention.key'), config.heads)
    value = _split_heads(_dense(states, params, prefix + 'attention.value'), config.heads)

    scores = nm.scale(nm.matmul(query, nm.transpose(key)), 1. / np.sqrt(config.head_size))
    probs = nm.softmax(scores, axis=-1, mask=keys)
    context = nm.reshape(nm.transpose(nm.matmul(probs, value), (0, 2, 1, 3)), (B, T, H))

    attended = nm.add(states, _dense(context, params, prefix + 'attention.output'))
    attended = nm.layer_normalize(attended, params[prefix + 'attention_norm.gain'], params[prefix + 'attention_norm.shift'], config.layer_norm_epsilon)

    inner = nm.gelu(_dense(attended, params, prefix + 'ffn.inner'))
    out = nm.add(attended, _dense(inner, params, prefix + 'ffn.outer'))
    out = nm.layer_normalize(out, params[prefix + 'ffn_norm.gain'], params[prefix + 'ffn_norm.shift'], config.layer_norm_epsilon)

    return (out, probs) if return_attention else out


def encode_base(states, attention_mask, params, config):
    """
    Apply layers_base blocks with distinct parameters

    Returns
    -------
    EncoderOutput
        Ponder costs of 1 and one step everywhere
    """
    for i in range(config.layers_base):
        states = encoder_block(states, attention_mask, params, 'blocks.{}.'.format(i), config)

    shape = states.shape[:2]
    return EncoderOutput(states, nm.Tensor(np.ones(shape)), np.asarray(attention_mask, dtype=np.int64).reshape(shape))


def encode_universal(states, attention_mask, params, config):
    """
    Apply the shared recurring unit under adaptive computation time

    Before each recurrence the step embedding is added; after it every
    running position emits a halting probability. A position halts once its
    running sum would pass 1 - act_epsilon (or at act_max_steps), taking the
    remainder as its last weight, and its state is frozen from then on. The
    output is the halting-weighted sum of each position's states.

    Parameters
    ----------
    states: Tensor
        Embedded inputs, shape (batch, positions, hidden)
    attention_mask: array-like
        1 on real positions; padding never runs
    params: ParameterStore
        The parameters
    config: ModelConfig
        The model configuration

    Returns
    -------
    EncoderOutput
        The weighted states, steps + remainder per position and the weights
    """
    running = np.asarray(attention_mask, dtype=bool).copy()
    B, T, H = states.shape
    threshold = 1. - config.act_epsilon
    halting_weight = nm.reshape(params['act.halting.weight'], (H, 1))

    accumulated = np.zeros((B, T))
    accumulated_t = nm.Tensor(np.zeros((B, T)))
    remainders = nm.Tensor(np.zeros((B, T)))
    steps = np.zeros((B, T), dtype=np.int64)
    output, history = None, []

    for n in range(config.act_max_steps):
        x = nm.add(states, nm.select(params['act.step_embeddings'], (np.array(n),)))
        for j in range(config.recurring_layers):
            x = encoder_block(x, attention_mask, params, 'unit.{}.'.format(j), config)

        # Halted positions keep their state
        live = running.astype(float)
        states = nm.add(nm.scale_rows(x, live), nm.scale_rows(states, 1. - live))

        logits = nm.add(nm.matmul(states, halting_weight), params['act.halting.bias'])
        halting = nm.reshape(nm.logistic(logits), (B, T))

        stop = running & ((accumulated + halting.data > threshold) | (n == config.act_max_steps - 1))
        go_on = (running & ~stop).astype(float)
        stop = stop.astype(float)

        remainder = nm.add_scalar(nm.scale(accumulated_t, -1.), 1.)
        weight = nm.add(nm.mul(halting, go_on), nm.mul(remainder, stop))
        contribution = nm.scale_rows(states, weight)
        output = contribution if output is None else nm.add(output, contribution)

        accumulated_t = nm.add(accumulated_t, nm.mul(halting, go_on))
        accumulated = accumulated + halting.data * go_on
        remainders = nm.add(remainders, nm.mul(remainder, stop))
        steps += running
        history.append(weight.data)

        running = go_on.astype(bool)
        if not running.any():
            break

    ponder_costs = nm.add(remainders, nm.Tensor(steps.astype(float)))
    logger.debug("recurrence ran %i steps, mean %.3f per position", len(history), steps[steps > 0].mean())

    return EncoderOutput(output, ponder_costs, steps, np.stack(history, axis=-1))


def encode(params, input_ids, segment_ids, attention_mask, config):
    """Embed and run the encoder matching the configured variant"""
    states = embed_inputs(params, input_ids, segment_ids, config)
    if config.is_universal:
        return encode_universal(states, attention_mask, params, config)

    return encode_base(states, attention_mask, params, config)
