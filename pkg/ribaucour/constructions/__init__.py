"""Flat normal bundle, parallel subbundle, spherical, Lamé and Dupin constructions."""
