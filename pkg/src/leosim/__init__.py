"""Deterministic simulator of an SDN-managed two-shell LEO network.

Compares hop-by-hop IPv4/IPv6 routing, MPLS label switching, SRv6 segment
routing and an energy-aware SRv6 variant over the same time-evolving
constellation topology.
"""

__version__ = "0.1.0"
