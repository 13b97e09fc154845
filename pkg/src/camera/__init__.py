# Camera pipeline: multi-scale feature maps per camera
