"""egolayers - layered ego-network structure and one-hop diffusion analysis."""

__version__ = "0.1.0"
