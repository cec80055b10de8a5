"""CPU-limit file backends for the mock orchestrator."""
