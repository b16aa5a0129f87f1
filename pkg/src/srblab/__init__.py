"""srblab: numerical experiments on SRB measures and their response to perturbations."""

__version__ = "0.1.0"
