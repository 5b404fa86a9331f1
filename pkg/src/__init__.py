"""MANOVA Spectra - deterministic-equivalent spectra of variance-component estimators."""
