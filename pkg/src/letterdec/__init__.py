"""Decoding imagined handwriting of letters from 24-channel EEG.

Modules: :mod:`dataio` (format), :mod:`dsp` (preprocessing),
:mod:`analysis` (similarity, PCA), :mod:`nn` (autodiff engine),
:mod:`models` (four CNN decoders), :mod:`harness` (cross-validation),
:mod:`stats`, :mod:`synth` (synthetic oracle data) and :mod:`cli`.
"""

__version__ = "0.1.0"
