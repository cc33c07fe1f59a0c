"""Rigorous-numerics toolkit certifying horseshoe chaos in the Lorenz system.

The package builds finite multivalued outer enclosures of flow-induced
section-to-section maps on cube grids, verifies the combinatorial
isolating-block condition, computes the rational Conley index of the
isolated invariant set, and checks the algebraic horseshoe hypotheses,
emitting a self-contained certificate for independent audit.
"""

__version__ = "0.1.0"
