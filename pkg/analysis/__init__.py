"""Design metrics, folding oracle, evaluation, fitness ranking and reports."""
