"""Channel prediction workbench for wideband massive MIMO-OFDM.

Synthetic multipath channels, LS pilot estimation, sub-channel dataset
construction (aggregated and separate learning), a numpy MLP trained with
ADAM, and the evaluation metrics used to compare predictors.
"""

__version__ = "0.1.0"
