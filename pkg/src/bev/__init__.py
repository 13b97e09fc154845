# BEV encoder: radar-guided queries, spatial cross attention, radar-camera gating
