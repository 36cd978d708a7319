"""Kedro pipelines of the immune face defense."""
