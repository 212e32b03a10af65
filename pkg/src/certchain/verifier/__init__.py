"""Reference destination-company client."""
