# Abstract interfaces: market models and config loading
