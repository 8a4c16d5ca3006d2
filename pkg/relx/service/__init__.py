"""Oracle services: the newline protocol server and the HTTP app."""
