"""n2rec - Next New POI recommendation with joint triplet loss learning"""

__version__ = "0.1.0"
