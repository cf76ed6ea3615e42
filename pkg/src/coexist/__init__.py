"""Throughput modelling and optimisation for coexisting slotted Aloha and CSMA networks."""

__version__ = "0.1.0"
