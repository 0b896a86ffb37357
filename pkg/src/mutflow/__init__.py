"""mutflow: multi-level self-supervised pre-training for protein complexes
and downstream binding free-energy change (ddG) prediction."""

__version__ = "0.1.0"
