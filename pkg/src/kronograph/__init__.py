"""Cross-graph spectral convolution with a parameterized Kronecker sum.

Subpackages and modules:

* ``numkit``      dense float64 ops, reverse-mode tape, checkpoints
* ``spectral``    graphs, Laplacians, polynomial filters, spectral rescaling
* ``crossgraph``  conjunctive signals and the factorized cross-graph filter
* ``preserving``  learnable pooling and the recursive graph preserving layer
* ``models``      sequence classifier, matrix completer, losses, metrics, Adam
* ``datagen``     synthetic datasets, skeleton transforms, dataset files
* ``cli``         the ``kronograph`` command
"""
from .crossgraph import (ConjunctiveSignal, ParamKronFilter, conjunctive_signal, cross_filter, cross_matvec,
                         dense_cross_filter, flop_estimate, kron_sum_dense)
from .preserving import LayerConfig, PreservedState, PreservingLayer
from .spectral import Graph, degree, normalized_laplacian, poly_filter, spectral_rescale

__version__ = "0.1.0"
