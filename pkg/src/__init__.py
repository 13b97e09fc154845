# Radar-camera fusion bench - src module
