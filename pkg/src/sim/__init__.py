# Scene simulator: synthetic boxes, radar sweeps and camera feature rasters
