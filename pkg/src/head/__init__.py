# Detection head: center heatmap, box regression, peak picking
