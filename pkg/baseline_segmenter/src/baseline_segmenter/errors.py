class ConfigError(ValueError):
    """Invalid training or inference configuration."""
