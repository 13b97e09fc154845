# Utilities: ordered parallel map, timing
