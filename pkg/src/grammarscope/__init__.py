"""Image-grammar learning: part semantics by deep clustering, part syntax by a
bidirectional LSTM, and detection of in-distribution patch corruptions."""

__version__ = "0.1.0"
