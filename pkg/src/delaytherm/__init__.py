"""Stochastic thermodynamics of a harmonic oscillator under delayed linear feedback.

Modules
-------
model      parameter reduction and experimental constants
spectral   response function, variance quadrature and stability
analytic   closed-form variance, entropy/work rates, asymptotics, curves
simulate   Euler-Maruyama integration of the delayed Langevin equation
analyze    trace estimators (filters, moments, PSD, damping and gain fits)
sweep      parameter sweeps and theory/simulation comparison
cli        command line entry point
"""

__version__ = "0.1.0"
