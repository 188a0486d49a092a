"""Classical and unrolled compressed-sensing reconstruction for MRI and CT."""
__version__ = "0.1.0"
