__all__ = ["CommandLine"]
