# HDG multilevel solver for the high wave number Helmholtz equation
__version__ = "1.0.0"
