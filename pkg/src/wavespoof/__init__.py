"""Audio anti-spoofing toolkit: cepstral and wavelet front-ends, a learnable
wavelet-deconvolution layer, a GMM back-end and detection metrics."""

__version__ = "0.1.0"
