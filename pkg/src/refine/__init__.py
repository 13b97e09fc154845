# Instance-level refinement: association, proposal attention, grid pooling
