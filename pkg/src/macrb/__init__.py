"""Joint transmit beamforming and movable-antenna placement for DoA-CRB minimization."""

__version__ = "0.1.0"
