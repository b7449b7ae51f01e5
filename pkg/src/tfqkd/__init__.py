"""Twin-field QKD key-rate toolkit: Fock-space states, channel model, decoy
estimation and asymptotic / finite-size key rates."""

__version__ = "0.1.0"
