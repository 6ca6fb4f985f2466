"""Federated mediator for SPARQL queries with XQuery-based filtering."""

__version__ = "0.1.0"
