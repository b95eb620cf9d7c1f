class ConfigError(Exception):
    """A run configuration file or flag could not be used."""
