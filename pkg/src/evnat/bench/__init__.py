"""Dataset preparation, benchmark orchestration and reporting."""
