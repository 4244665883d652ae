import numpy as np
import zope.interface
from zope.interface import implementer

from . import gnn
from . import tensor as T


class IProblem(zope.interface.Interface):
    """
    An objective J(x, phi, w) over minibatches, as seen by the game trainer.
    Minibatches group items by snapshot key; every key carries its own vertex
    feature matrix x and edge feature matrix phi.
    """

    param_size = zope.interface.Attribute("length of the flat parameter vector w")

    def inputs(batch):
        """
        Base features of a minibatch as a dict key -> (x, phi) of arrays.
        """

    def objective(w, xs, phis, batch, dropout_seed):
        """
        Scalar Tensor J for parameter Tensor `w` and feature Tensors `xs`,
        `phis` (dicts keyed like `inputs`). Dropout is active iff
        `dropout_seed` is not None.
        """


@implementer(IProblem)
class GnnProblem:
    """Mean masked cross-entropy of the attention network over a minibatch."""

    def __init__(self, config):
        self.config = config
        self.param_size = sum(int(np.prod(seg.shape)) for seg in gnn.param_layout(config))

    def inputs(self, batch):
        return dict(
            (group.key, (group.snapshot.vertex_features, group.snapshot.edge_features))
            for group in batch.groups
        )

    def objective(self, w, xs, phis, batch, dropout_seed=None):
        entries = [
            (group.snapshot, xs[group.key], phis[group.key], group.mask())
            for group in batch.groups
        ]
        return gnn.batch_loss(w, self.config, entries, dropout_seed)

    def value(self, w, batch, dropout_seed=None):
        xs, phis = {}, {}
        for key, (x, phi) in self.inputs(batch).items():
            xs[key] = T.constant(x)
            phis[key] = T.constant(phi)

        return self.objective(T.constant(w), xs, phis, batch, dropout_seed).item()
