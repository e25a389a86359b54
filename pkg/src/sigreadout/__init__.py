"""Path-signature features for superconducting qubit readout discrimination."""

__version__ = "0.1.0"
