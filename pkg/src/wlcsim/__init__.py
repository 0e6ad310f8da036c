"""Models of an interferometer arm coupled to an optomechanical filter
cavity: single-mode closed forms, full two-channel frequency-domain
scattering with Nyquist stability analysis, a discrete-time field
simulator, and an optimal two-channel readout blend.
"""

__version__ = "0.1.0"
