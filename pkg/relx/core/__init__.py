"""Core module for the relx toolkit."""
