"""
Conditional covariance selection: index-varying sparse precision matrices
estimated from kernel-smoothed local covariances.
"""

__version__ = "0.1.0"
