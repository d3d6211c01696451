"""Confidential cross-chain relay testbed.

A desk-scale platform for routing encrypted transactions between mock
parachains through a proof-of-authority relay chain whose nodes verify
and forward traffic inside simulated trusted-execution enclaves.
"""

__version__ = "0.1.0"
