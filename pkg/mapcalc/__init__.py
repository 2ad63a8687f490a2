"""
Discrete calculus of maps between Riemannian charts: tension and bitension
fields, stress-energy tensors, soliton identities and the finite-difference
oracles that certify them.
"""

__version__ = "1.0.0"
