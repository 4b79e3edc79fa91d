"""Expression jets, grid fields, finite differences and path integration."""
