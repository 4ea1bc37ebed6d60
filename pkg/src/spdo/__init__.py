"""Decentralized proximal optimization: PDO, SPDO and Accelerated-SPDO
with gossip averaging, gradient tracking and instrumentation."""

__version__ = "0.1.0"
