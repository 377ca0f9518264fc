"""Local-DP graph collection, homophily-based synthesis and GCN evaluation."""

__version__ = "0.1.0"
