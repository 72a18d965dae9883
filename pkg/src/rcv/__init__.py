"""Reaction-coordinate quality via differential lumpability/deflatability losses."""
