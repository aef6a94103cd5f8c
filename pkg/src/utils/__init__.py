"""Configuration, seeding and error handling."""
