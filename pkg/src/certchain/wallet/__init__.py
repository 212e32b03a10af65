"""Reference end-user wallet client."""
