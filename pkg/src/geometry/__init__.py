# Geometry: ego frame, BEV grid, polar helpers, camera projection
