"""PMU siting toolkit for unbalanced distribution feeders.

Simulates shunt faults on small radial feeders, extracts symmetrical
component delta features, and searches for near-optimal PMU bus sets with
greedy forward selection plus neighborhood refinement, scored by a
cross-validated RBF-SVM or by correlation / admittance baselines.
"""

__version__ = "0.1.0"
