"""Desk-scale laboratory for robust multi-agent communication.

Trains a gated communication policy alongside a cooperative team,
learns a channel-masking adversary that finds the critical channels,
retrains the communication policy under the adversary's masks, and
evaluates robustness, performance, and communication-frequency balance.
"""

__version__ = "0.1.0"
