# Logging setup
