"""Hand-signed digit recognition package."""
