# Market model adapters
