"""spoofbench: desk-scale codec-artifact audio workbench.

Regenerates "deepfake" audio from real corpora through a configurable
residual-vector-quantization transcoder, trains a compact spoofing detector
under erm / sam / asam / csam strategies, and evaluates it with EER-based
condition reports.
"""

__version__ = "0.1.0"
