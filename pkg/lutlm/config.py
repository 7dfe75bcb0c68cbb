# -*- coding: utf-8 -*-

"""A module of model and training configurations and their file format"""

from dataclasses import dataclass, field, fields, replace
import logging
import os
from pkg_resources import resource_filename

logger = logging.getLogger(__name__)

VARIANTS = ['base', 'latent', 'universal', 'latent-universal']


@dataclass
class ModelConfig:
    """
    All architecture hyperparameters of one model variant
    """
    variant: str = 'base'
    hidden: int = 64
    heads: int = 4
    ffn: int = 256
    layers_base: int = 2
    vocab: int = 0
    max_positions: int = 96
    latent_dims: int = 0
    recurring_layers: int = 3
    act_epsilon: float = 0.01
    act_max_steps: int = 8
    act_tau: float = 0.01
    halting_bias_init: float = 1.
    latent_mix: float = 0.99
    latent_floor: float = 0.01
    initializer_range: float = 0.02
    latent_init_range: float = 0.1
    layer_norm_epsilon: float = 1e-12

    @property
    def is_latent(self):
        return self.variant in ('latent', 'latent-universal')

    @property
    def is_universal(self):
        return self.variant in ('universal', 'latent-universal')

    @property
    def head_size(self):
        return self.hidden // self.heads

    @property
    def ns_inputs(self):
        """Width of the next-sentence classifier input"""
        return self.hidden + 2 if self.latent_dims > 0 else self.hidden

    def validate(self):
        """Raise a ValueError naming the first violated constraint"""
        if self.variant not in VARIANTS:
            raise ValueError("{}: Not a valid variant. Please use {}".format(self.variant, VARIANTS))

        if self.hidden < 1 or self.heads < 1 or self.hidden % self.heads:
            raise ValueError("hidden = {}: must be a positive multiple of heads = {}".format(self.hidden, self.heads))

        if self.latent_dims < 0:
            raise ValueError("latent_dims = {}: must be >= 0".format(self.latent_dims))

        if self.is_latent != (self.latent_dims > 0):
            raise ValueError("variant '{}' with latent_dims = {}: latent variants need latent_dims > 0, others 0".format(self.variant, self.latent_dims))

        if not 0 < self.act_epsilon < 0.5:
            raise ValueError("act_epsilon = {}: must be in (0, 0.5)".format(self.act_epsilon))

        if self.act_max_steps < 1:
            raise ValueError("act_max_steps = {}: must be >= 1".format(self.act_max_steps))

        if self.initializer_range <= 0 or self.latent_init_range < 0:
            raise ValueError("initializer_range = {} must be > 0 and latent_init_range = {} >= 0".format(self.initializer_range, self.latent_init_range))

        if self.act_tau < 0:
            raise ValueError("act_tau = {}: must be >= 0".format(self.act_tau))

        if self.vocab < 1 or self.max_positions < 1 or self.ffn < 1 or self.layers_base < 0 or self.recurring_layers < 1:
            raise ValueError("vocab, max_positions, ffn and recurring_layers must be positive, layers_base non-negative")

        if not 0 < self.latent_mix <= 1 or not 0 <= self.latent_floor <= 1 or abs(self.latent_mix + self.latent_floor - 1) > 1e-9:
            raise ValueError("latent_mix = {} and latent_floor = {} must be in [0, 1] and sum to 1".format(self.latent_mix, self.latent_floor))

        return self


@dataclass
class TrainConfig:
    """
    The settings of one training run
    """
    variant: str = 'base'
    steps: int = 500
    batch_size: int = 20
    learning_rate: float = 1e-3
    latent_rate_scale: float = 10.
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    seed: int = 0
    act_tau: float = 0.01
    weight_emoji: float = 2.
    weight_url: float = 0.02
    weight_mention: float = 0.02
    weight_regular: float = 1.
    weight_special: float = 0.
    eval_interval: int = 50
    checkpoint_interval: int = 500
    examples: str = ''
    eval_examples: str = ''
    vocab: str = ''
    emoticons: str = ''
    output_dir: str = '.'
    resume: str = ''
    freeze: tuple = field(default_factory=tuple)

    @property
    def weights(self):
        """The token kind to loss multiplier overrides"""
        return {'emoji': self.weight_emoji, 'url': self.weight_url, 'mention': self.weight_mention,
                'regular': self.weight_regular, 'special': self.weight_special}

    def validate(self):
        """Raise a ValueError naming the first violated constraint"""
        if self.variant not in VARIANTS:
            raise ValueError("{}: Not a valid variant. Please use {}".format(self.variant, VARIANTS))

        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps = {} and batch_size = {} must be >= 1".format(self.steps, self.batch_size))

        if self.learning_rate <= 0:
            raise ValueError("learning_rate = {}: must be > 0".format(self.learning_rate))

        if self.latent_rate_scale <= 0:
            raise ValueError("latent_rate_scale = {}: must be > 0".format(self.latent_rate_scale))

        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction = {}: must be in [0, 1)".format(self.warmup_fraction))

        if self.eval_interval < 1 or self.checkpoint_interval < 1:
            raise ValueError("eval_interval and checkpoint_interval must be >= 1")

        if any(value < 0 for value in self.weights.values()):
            raise ValueError("{}: loss weights must be >= 0".format(self.weights))

        return self


FULL_SCALE_PRESETS = {variant: ModelConfig(variant=variant, hidden=768, heads=12, ffn=3072, layers_base=12, vocab=31346,
                                           max_positions=512, latent_dims=8 if 'latent' in variant else 0)
                      for variant in VARIANTS}

# The results table's parameter counts, in millions
FULL_SCALE_PARAMETERS = {'base': 110.1, 'latent': 110.3, 'universal': 46.3, 'latent-universal': 46.5}


def _convert(kind, text):
    """Turn a config value into the type of its field"""
    if kind is bool:
        if text.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
            raise ValueError("{}: not a boolean".format(text))
        return text.lower() in ('true', '1', 'yes')

    if kind is tuple:
        return tuple(item.strip() for item in text.split(',') if item.strip())

    return kind(text)


def _format(value):
    """Turn a field value into config text"""
    if isinstance(value, tuple):
        return ', '.join(value)

    return repr(value) if isinstance(value, float) else str(value)


def parse_config(text, source='<string>'):
    """
    Parse `key = value` lines into a ModelConfig and a TrainConfig

    Parameters
    ----------
    text: str
        The config text; '#' starts a comment
    source: str
        A name for error messages

    Returns
    -------
    tuple
        The (ModelConfig, TrainConfig) pair
    """
    model_fields = {f.name: f.type for f in fields(ModelConfig)}
    train_fields = {f.name: f.type for f in fields(TrainConfig)}
    model_values, train_values, seen = {}, {}, set()

    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue

        if '=' not in line:
            raise ValueError("{} line {}: expected 'key = value', got '{}'".format(source, number, line))

        key, value = (part.strip() for part in line.split('=', 1))
        if key not in model_fields and key not in train_fields:
            raise ValueError("{} line {}: unknown key '{}'".format(source, number, key))

        if key in seen:
            raise ValueError("{} line {}: duplicate key '{}'".format(source, number, key))
        seen.add(key)

        for known, values in ((model_fields, model_values), (train_fields, train_values)):
            if key in known:
                try:
                    values[key] = _convert(known[key], value)
                except ValueError:
                    raise ValueError("{} line {}: bad value '{}' for '{}'".format(source, number, value, key))

    if 'latent_dims' not in model_values and model_values.get('variant', 'base') in ('latent', 'latent-universal'):
        model_values['latent_dims'] = 8

    model = ModelConfig(**model_values)
    train = TrainConfig(**train_values)
    if 'act_tau' not in seen:
        train = replace(train, act_tau=model.act_tau)

    return model, train


def load_config(path):
    """
    Load a config file

    Parameters
    ----------
    path: str
        The path to a UTF-8 `key = value` file

    Returns
    -------
    tuple
        The (ModelConfig, TrainConfig) pair; relative data paths are resolved
        against the directory of the file
    """
    if not os.path.exists(path):
        raise FileNotFoundError("{}: Invalid file".format(path))

    with open(path, encoding='utf-8') as f:
        model, train = parse_config(f.read(), source=path)

    # Resolve data paths relative to the config file
    root = os.path.dirname(os.path.abspath(path))
    paths = {key: os.path.join(root, getattr(train, key)) for key in ('examples', 'eval_examples', 'vocab', 'emoticons', 'resume')
             if getattr(train, key) and not os.path.isabs(getattr(train, key))}
    train = replace(train, **paths)

    logger.info("config loaded from %s: variant %s, hidden %i", path, model.variant, model.hidden)

    return model, train


def config_lines(model):
    """The `key = value` text of a ModelConfig, one field per line"""
    return '\n'.join('{} = {}'.format(f.name, _format(getattr(model, f.name))) for f in fields(ModelConfig)) + '\n'


def packaged_config(name):
    """
    The path of a config shipped with the package

    Parameters
    ----------
    name: str
        The config name, ['desk', 'tiny']
    """
    path = resource_filename('lutlm', 'files/{}.cfg'.format(name))
    if not os.path.exists(path):
        raise ValueError("{}: No packaged config of that name".format(name))

    return path
