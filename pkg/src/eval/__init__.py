# Evaluation: center-distance matching, AP, TP errors, composite score, reports
