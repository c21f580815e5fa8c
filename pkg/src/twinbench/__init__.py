"""twinbench: desk-scale virtual-physical fusion test bench for AV algorithms.

Co-simulates mixed virtual/physical traffic over a latency-modeled bus,
drives adversarial and parallel-deduction single-vehicle tests plus V2X
cooperation tests against pluggable algorithms, and scores both algorithm
intelligence (five dimensions) and platform credibility (DTW + PCA + five
similarity metrics).
"""

from importlib import resources

__version__ = "0.1.0"


def data_path(*parts: str):
    """Path to a shipped data file (maps, scenarios, scheme, rulebase)."""
    root = resources.files("twinbench") / "data"
    for p in parts:
        root = root / p
    return root
