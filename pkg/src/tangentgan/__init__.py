"""GAN-based semi-supervised learning with manifold-tangent invariance.

Desk-scale library: bidirectional GAN inference (plain and with an extra
reconstruction-pair term), Jacobian-based tangent estimation, invariance
penalties for the classifier, Grassmannian subspace metrics, and gradient
probes for the fake-example dynamics, all on synthetic manifolds with
analytic oracles.
"""

from .backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
