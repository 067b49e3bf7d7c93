"""Directed factor graph fault-diagnosis models built from hybrid bond graphs."""
