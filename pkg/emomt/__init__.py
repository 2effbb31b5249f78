"""
Emotion-conditioned English-to-French machine translation
"""
__version__ = "0.1.0"
