# -*- coding: utf-8 -*-

"""A module to run the pretraining model variants on batches of examples and inspect what they learned"""

from dataclasses import dataclass
from functools import wraps
import logging

import numpy as np

from . import numeric as nm
from . import encoder as enc
from . import heads as hd
from . import latent as lt
from .config import ModelConfig
from .utilities import collate, planted_vocabulary
from .tokenizer import Vocabulary

logger = logging.getLogger(__name__)


def latent_required(func):
    """A wrapper to check that the model has a latent matrix before a method can be executed"""
    @wraps(func)
    def _latent_required(*args, **kwargs):
        """Check that latent_dims is positive"""
        if not args[0].config.is_latent:
            raise ValueError("'{}' needs a latent variant but this model is '{}'. Please use {}".format(
                func.__name__, args[0].config.variant, ['latent', 'latent-universal']))

        return func(*args, **kwargs)

    return _latent_required


@dataclass
class ForwardResult:
    """
    Everything one forward pass over a batch produces
    """
    encoded: enc.EncoderOutput
    mlm_logits: nm.Tensor
    ns_logits: nm.Tensor
    mlm_loss: nm.Tensor
    ns_loss: nm.Tensor
    ponder_loss: nm.Tensor
    total: nm.Tensor
    distributions: nm.Tensor = None
    distance_features: nm.Tensor = None

    @property
    def breakdown(self):
        """The loss terms as a LossBreakdown"""
        return hd.LossBreakdown(self.mlm_loss.item(), self.ns_loss.item(), self.ponder_loss.item(), self.total.item())

    def mean_ponder_steps(self, attention_mask):
        """Mean recurrences over unpadded positions"""
        return float(self.encoded.steps_taken[np.asarray(attention_mask, dtype=bool)].mean())


class LanguageModel(object):
    """
    A class object tying a configuration to its parameters and forward pass
    """
    def __init__(self, config, params=None, vocab=None, seed=0, tau=None):
        """
        Initialize the model

        Parameters
        ----------
        config: ModelConfig
            The architecture of one variant
        params: ParameterStore (optional)
            Trained parameters, freshly initialized when omitted
        vocab: Vocabulary (optional)
            The vocabulary, needed for token reports
        seed: int
            The initialization seed
        tau: float (optional)
            The ponder coefficient, config.act_tau by default
        """
        self.config = config.validate()
        self.params = params if params is not None else enc.init_parameters(config, seed)
        self.vocab = vocab
        self.tau = config.act_tau if tau is None else tau

        # Make sure the stored tensors fit the configuration
        expected = enc.parameter_shapes(config)
        if list(expected) != self.params.names():
            raise ValueError("Parameters do not match the '{}' configuration".format(config.variant))

        for name, shape in expected.items():
            if self.params[name].shape != tuple(shape):
                raise nm.ShapeError("{}: shape {} but the configuration needs {}".format(name, self.params[name].shape, shape))

    @classmethod
    def from_checkpoint(cls, path, config=None, vocab=None):
        """
        Load a model from a checkpoint file

        Parameters
        ----------
        path: str
            The checkpoint path
        config: ModelConfig (optional)
            The requesting configuration, checked against the stored echo
        vocab: Vocabulary (optional)
            The vocabulary

        Returns
        -------
        LanguageModel
            The model with the stored parameters
        """
        from .checkpoint import Checkpoint

        ckpt = Checkpoint(path, config=config)
        return cls(ckpt.config, params=ckpt.parameters(), vocab=vocab)

    def with_parameters(self, tensors):
        """A model sharing every parameter except the given tensors"""
        model = LanguageModel.__new__(LanguageModel)
        model.config, model.vocab, model.tau = self.config, self.vocab, self.tau
        model.params = self.params.replaced(tensors)
        return model

    @property
    def parameter_count(self):
        return self.params.count()

    def checksum(self):
        """The parameter digest, unchanged by evaluation"""
        return self.params.checksum()

    def collate(self, examples):
        return collate(examples, self.config.vocab)

    def encode_batch(self, examples):
        """The encoder output for a list of examples"""
        batch = self.collate(examples)
        return enc.encode(self.params, batch.input_ids, batch.segment_ids, batch.attention_mask, self.config)

    def distributions(self, counts):
        """Category distributions of token count rows"""
        return lt.latent_distributions(self.params['latent.matrix'], counts, self.config.latent_mix, self.config.latent_floor)

    def forward(self, batch):
        """
        Run the variant's full forward pass over a batch

        Parameters
        ----------
        batch: Batch
            The collated examples

        Returns
        -------
        ForwardResult
            Logits, loss terms and encoder bookkeeping
        """
        config = self.config
        encoded = enc.encode(self.params, batch.input_ids, batch.segment_ids, batch.attention_mask, config)

        # Latent output bias and next-sentence distance features
        bias_rows = distributions = features = None
        if config.is_latent:
            matrix = self.params['latent.matrix']
            distributions = self.distributions(batch.counts_full)
            bias_rows = nm.take_rows(lt.example_bias(matrix, distributions), batch.example_index)
            features = lt.distance_features(self.distributions(batch.counts_a), self.distributions(batch.counts_b))

        head = hd.MLMHead(self.params, config)
        mlm_logits = hd.mlm_logits(encoded.states, batch.masked_index, head, bias_rows)
        mlm_loss = hd.weighted_mlm_loss(mlm_logits, batch.masked_labels, batch.position_weights)

        cls_state = nm.select(encoded.states, (np.arange(len(batch)), np.zeros(len(batch), dtype=np.int64)))
        ns_logits, ns_loss = hd.ns_logits_and_loss(cls_state, self.params, config, batch.ns_labels, features)

        if config.is_universal:
            ponder = hd.ponder_loss(encoded.ponder_costs, batch.attention_mask, self.tau)
        else:
            ponder = nm.Tensor(0.)

        total = nm.add(nm.add(mlm_loss, ns_loss), ponder)

        return ForwardResult(encoded, mlm_logits, ns_logits, mlm_loss, ns_loss, ponder, total, distributions, features)

    def loss(self, examples):
        """The total loss of a list of examples"""
        return self.forward(self.collate(examples)).total

    def features(self, example):
        """Token vectors, classification vector and (latent variants) category distribution"""
        return lt.extract_features(self, example)

    @latent_required
    def latent_distribution(self, unmasked_ids):
        """The category distribution of one token multiset as an array"""
        return lt.latent_distribution(self.params['latent.matrix'], unmasked_ids, self.config.latent_mix, self.config.latent_floor).numpy()

    @latent_required
    def top_examples_per_category(self, examples, k):
        """
        The k examples with the highest probability of each category

        Parameters
        ----------
        examples: sequence
            TrainingExamples in corpus order
        k: int
            Examples per category

        Returns
        -------
        list
            One list per category of (example, probability), highest first
        """
        if not examples:
            return [[] for _ in range(self.config.latent_dims)]

        counts = lt.count_matrix([example.unmasked_ids_full for example in examples], self.config.vocab)
        ranking = lt.top_examples_per_category(self.distributions(counts).data, k)

        return [[(examples[n], p) for n, p in category] for category in ranking]

    @latent_required
    def top_tokens_per_category(self, k):
        """The k vocabulary entries with the largest bias in each category"""
        if self.vocab is None:
            raise ValueError("No vocabulary attached; pass vocab= when creating the model")

        return lt.top_tokens_per_category(self.params['latent.matrix'], self.vocab, k)

    def __repr__(self):
        return "<LanguageModel '{}' with {} parameters>".format(self.config.variant, self.parameter_count)


class TinyLanguageModel(LanguageModel):
    """
    A small model on the planted-corpus vocabulary, for tests
    """
    def __init__(self, variant='latent-universal', seed=0, **kwargs):
        """
        Initialize the small model

        Parameters
        ----------
        variant: str
            The variant, ['base', 'latent', 'universal', 'latent-universal']
        seed: int
            The initialization seed
        """
        tokens, emoticons = planted_vocabulary()
        vocab = Vocabulary(tokens + [t for t in emoticons if t not in tokens], emoticons=emoticons, base_size=len(tokens))
        settings = dict(variant=variant, hidden=16, heads=2, ffn=32, layers_base=2, vocab=len(vocab), max_positions=32,
                        latent_dims=2 if 'latent' in variant else 0, recurring_layers=3, act_max_steps=4)
        settings.update(kwargs)
        config = ModelConfig(**settings)

        super().__init__(config, vocab=vocab, seed=seed)
