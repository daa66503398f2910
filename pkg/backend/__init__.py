"""
Timing-chain simulator for White Rabbit synchronized mode-locked lasers

Provides:
- WR clock-distribution chains over fiber, with attenuation-dependent noise
- PLL-disciplined mode-locked lasers and direct (coax) synchronization
- Tagger measurement chain, tag files and pairwise time-error extraction
- TDEV / ADEV / MDEV with 1-sigma confidence bounds
- HOM indistinguishability versus relative timing jitter
"""

__version__ = "0.1.0"
