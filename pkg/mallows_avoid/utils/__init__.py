"""
Shared utilities: settings, records, quadrature, file formats and workers.
"""
