# Model: parameter groups, forward pass, losses, checkpoints, training
