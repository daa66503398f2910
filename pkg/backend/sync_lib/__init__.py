"""
Sync Library - core simulation and analysis logic

Noise synthesis, network and laser models, the measurement chain, stability
estimators and the scenario runner behind the entry points.
"""

__version__ = "0.1.0"
