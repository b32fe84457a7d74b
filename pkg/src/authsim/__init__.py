"""Channel-randomness authentication simulator.

Physical-layer authentication, asymmetric-key and symmetric-key schemes
keyed by a time-varying MIMO channel, with the matching eavesdropper
attacks and false-alarm / missed-detection estimates.
"""

__version__ = "0.1.0"
