# Radar pipeline: sweep accumulation, filtering, pillar encoding
