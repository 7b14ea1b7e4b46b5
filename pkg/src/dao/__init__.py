"""Data access for field files, tables and run archives."""
