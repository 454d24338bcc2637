"""Voice-conversion robustness toolkit: noise mixing, enhancement, an LPC
vocoder, five spectral conversion methods and an evaluation harness."""

from .signal_io import SAMPLE_RATE, Waveform, read_wav, write_wav

__version__ = "0.1.0"

__all__ = ["SAMPLE_RATE", "Waveform", "read_wav", "write_wav", "__version__"]
