"""
EdgeForge Core
Graph storage, tensor engine, GIN backbones, OES, spectral diagnostics and experiments
"""
