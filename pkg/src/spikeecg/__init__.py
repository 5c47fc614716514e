"""Spiking-network ECG beat classifier.

Layers, in training order: dual-polarity Poisson encoder, Gaussian gain
layer, STDP feature layer with lateral inhibition, and an R-STDP output
layer with one neuron per class. :mod:`spikeecg.pipeline` ties them
together and :mod:`spikeecg.cli` exposes ``train``, ``eval``, ``synth``
and ``energy`` subcommands.
"""

__version__ = "0.1.0"
