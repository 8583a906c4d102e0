__all__ = ["fs", "log"]
