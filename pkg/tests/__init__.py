"""MANOVA Spectra - Test suite."""
